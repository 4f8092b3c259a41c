"""Synthetic VBR video traces: one frame-size sequence per quantizer rung.

Each content profile is turned into a ladder of 30 variants (QP 2..31).  The
mean rate of rung ``q`` is ``base_rate_qp2 * (2 / q) ** gamma``.  Frame sizes
share one per-frame complexity sequence across all rungs (the same scene is
hard to code at every QP), so the ladder keeps its shape from rung to rung.

Frame-size model, per GoP of ``G`` frames (1 I-frame followed by ``G-1``
P-frames, no B-frames)::

    p_mean = G * frame_mean / (i_to_p_ratio + G - 1)
    i_mean = i_to_p_ratio * p_mean
    size   = type_mean * noise,   noise ~ LogNormal(-b**2/2, b), clamped to [0.25, 4]

after which each rung is rescaled so its realized mean rate equals the target.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import US_PER_S, make_rng

QP_MIN = 2
QP_MAX = 31
QP_RANGE = range(QP_MIN, QP_MAX + 1)

NOISE_FLOOR = 0.25
NOISE_CEIL = 4.0

# Table-3 framing: 1052 B packets carrying 8 B UDP + 20 B IP headers.
PACKET_SIZE = 1052
HEADER_BYTES = 8 + 20

RESOLUTIONS = {"CIF": (352, 288), "QCIF": (176, 144)}


@dataclass(frozen=True)
class ContentProfile:
    name: str
    resolution: str
    base_rate_qp2: int  # bps
    duration: int  # frames
    frame_rate: int = 30
    gop_length: int = 30
    burstiness: float = 0.2
    i_to_p_ratio: float = 4.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.resolution not in RESOLUTIONS:
            raise ValueError(f"unknown resolution {self.resolution!r}")
        if self.frame_rate <= 0 or self.gop_length <= 0:
            raise ValueError("frame_rate and gop_length must be positive")
        if self.duration < self.gop_length:
            raise ValueError("duration must cover at least one GoP")
        if self.duration % self.gop_length:
            raise ValueError("duration must be a whole number of GoPs so looping keeps I-frames aligned")
        if self.base_rate_qp2 <= 0:
            raise ValueError("base_rate_qp2 must be positive")
        if self.i_to_p_ratio < 1:
            raise ValueError("i_to_p_ratio must be >= 1")
        if self.burstiness < 0:
            raise ValueError("burstiness must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def target_rate(self, qp):
        check_qp(qp)
        return self.base_rate_qp2 * (QP_MIN / qp) ** self.gamma

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class VideoTrace:
    qp: int
    frame_rate: int
    gop_length: int
    frame_types: list  # "I" / "P"
    sizes: np.ndarray  # bytes, int64
    _mean_rate: float = field(init=False, repr=False)

    def __post_init__(self):
        check_qp(self.qp)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        if len(self.sizes) != len(self.frame_types) or len(self.sizes) == 0:
            raise ValueError("frame types and sizes must be non-empty and aligned")
        if (self.sizes <= 0).any():
            raise ValueError("frame sizes must be positive")
        self._mean_rate = float(self.sizes.sum()) * 8 * self.frame_rate / len(self.sizes)

    @property
    def duration(self):
        return len(self.sizes)

    @property
    def mean_rate(self):
        """Mean encoded rate in bps over one loop of the trace."""
        return self._mean_rate

    def frames(self):
        for i, (t, s) in enumerate(zip(self.frame_types, self.sizes)):
            yield i, t, int(s)


class VariantLadder:
    """The 30 rate variants of one content, keyed by QP."""

    def __init__(self, content, variants):
        if sorted(variants) != list(QP_RANGE):
            raise ValueError("a ladder needs exactly the rungs QP 2..31")
        self.content = content
        self.variants = dict(variants)
        rates = [self.variants[q].mean_rate for q in QP_RANGE]
        if any(a <= b for a, b in zip(rates, rates[1:])):
            raise ValueError("ladder mean rates must strictly decrease with QP")
        self._rates = dict(zip(QP_RANGE, rates))

    def __getitem__(self, qp):
        return self.variants[qp]

    def __len__(self):
        return len(self.variants)

    def rate(self, qp):
        return self._rates[qp]

    @property
    def rates(self):
        return dict(self._rates)

    @property
    def r_max(self):
        return self._rates[QP_MIN]

    @property
    def r_min(self):
        return self._rates[QP_MAX]


def check_qp(qp):
    if not (QP_MIN <= qp <= QP_MAX):
        raise ValueError(f"QP {qp} outside {QP_MIN}..{QP_MAX}")


def gop_frame_types(duration, gop_length):
    return ["I" if i % gop_length == 0 else "P" for i in range(duration)]


def generate_ladder(profile, seed):
    """Build the 30-rung ladder for ``profile``; draws come from the profile's own stream."""
    rng = make_rng(seed, f"trace:{profile.name}")
    n, g = profile.duration, profile.gop_length
    types = gop_frame_types(n, g)
    is_i = np.array([t == "I" for t in types])

    b = profile.burstiness
    noise = np.exp(rng.normal(-b * b / 2, b, size=n)) if b > 0 else np.ones(n)
    noise = np.clip(noise, NOISE_FLOOR, NOISE_CEIL)
    ratio = profile.i_to_p_ratio
    # Relative weight of each frame: I-frames are ratio times a P-frame.
    weight = np.where(is_i, ratio, 1.0) * noise

    variants = {}
    for qp in QP_RANGE:
        target_bytes = profile.target_rate(qp) / 8 * n / profile.frame_rate
        sizes = np.maximum(1, np.rint(weight * (target_bytes / weight.sum()))).astype(np.int64)
        variants[qp] = VideoTrace(qp, profile.frame_rate, g, types, sizes)
    return VariantLadder(profile, variants)


def frame_index_at(frame_rate, duration, elapsed_us):
    if elapsed_us < 0:
        raise ValueError("elapsed time must be non-negative")
    return (elapsed_us * frame_rate // US_PER_S) % duration


def frame_at(trace, elapsed_us):
    """Frame playing ``elapsed_us`` into a session; the trace loops."""
    i = frame_index_at(trace.frame_rate, trace.duration, elapsed_us)
    return i, trace.frame_types[i], int(trace.sizes[i])


def packetize(frame_size, packet_size=PACKET_SIZE, header=HEADER_BYTES):
    """Split a frame into packets; returns ``(wire_bytes, payload_bytes)`` pairs.

    Every packet goes out at the configured wire size, the last one padded.
    """
    cap = packet_size - header
    if cap <= 0:
        raise ValueError("packet size must exceed the header size")
    if frame_size < 0:
        raise ValueError("frame size must be non-negative")
    full, rest = divmod(frame_size, cap)
    pkts = [(packet_size, cap)] * full
    if rest:
        pkts.append((packet_size, rest))
    return pkts


def packet_count(frame_size, packet_size=PACKET_SIZE, header=HEADER_BYTES):
    cap = packet_size - header
    return -(-frame_size // cap)


# -- trace files -----------------------------------------------------------

def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "frame_type", "size_bytes"])
        for i, t, s in trace.frames():
            w.writerow([i, t, s])


def read_trace_csv(path, qp, frame_rate, gop_length):
    types, sizes = [], []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        for expected, row in enumerate(rows):
            if int(row["frame_index"]) != expected:
                raise ValueError(f"{path}: frame_index out of order at row {expected}")
            if row["frame_type"] not in ("I", "P"):
                raise ValueError(f"{path}: bad frame type {row['frame_type']!r}")
            types.append(row["frame_type"])
            sizes.append(int(row["size_bytes"]))
    return VideoTrace(qp, frame_rate, gop_length, types, sizes)


def export_ladder(ladder, directory):
    """Write one CSV per rung plus ``manifest.json``; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    p = ladder.content
    files = {}
    for qp in QP_RANGE:
        name = f"{p.name}_qp{qp:02d}.csv"
        write_trace_csv(ladder[qp], d / name)
        files[str(qp)] = name
    manifest = {
        "content": p.name,
        "profile": {
            "name": p.name, "resolution": p.resolution, "base_rate_qp2": p.base_rate_qp2,
            "duration": p.duration, "frame_rate": p.frame_rate, "gop_length": p.gop_length,
            "burstiness": p.burstiness, "i_to_p_ratio": p.i_to_p_ratio, "gamma": p.gamma,
        },
        "fps": p.frame_rate,
        "gop": p.gop_length,
        "variants": files,
    }
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def import_ladder(manifest_path):
    manifest_path = Path(manifest_path)
    m = json.loads(manifest_path.read_text())
    fps, gop = int(m["fps"]), int(m["gop"])
    variants = {
        int(qp): read_trace_csv(manifest_path.parent / fname, int(qp), fps, gop)
        for qp, fname in m["variants"].items()
    }
    durations = {v.duration for v in variants.values()}
    if len(durations) != 1:
        raise ValueError("all rungs of a ladder must have the same frame count")
    if "profile" in m:
        profile = ContentProfile.from_dict(m["profile"])
    else:
        # External traces: derive a profile from what the files say.
        q2 = variants[QP_MIN]
        profile = ContentProfile(
            name=m["content"], resolution=m.get("resolution", "CIF"),
            base_rate_qp2=int(round(q2.mean_rate)), duration=q2.duration,
            frame_rate=fps, gop_length=gop)
    return VariantLadder(profile, variants)


def mean_gop_bits(trace):
    """Mean bits per GoP of a trace (used to size the shaper)."""
    return trace.mean_rate * trace.gop_length / trace.frame_rate


def rung_for_rate(ladder, rate):
    """Lowest QP whose mean rate does not exceed ``rate`` (QP 31 if none)."""
    for qp in QP_RANGE:
        if ladder.rate(qp) <= rate:
            return qp
    return QP_MAX


def log_rate_position(ladder, rate):
    """Where ``rate`` sits between the lowest and highest rung, on a log scale, in [0, 1]."""
    lo, hi = ladder.r_min, ladder.r_max
    if rate <= lo:
        return 0.0
    if rate >= hi:
        return 1.0
    return math.log(rate / lo) / math.log(hi / lo)
