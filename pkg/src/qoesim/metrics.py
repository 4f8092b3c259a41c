"""Receiver-side decodability, the MOS proxy, per-run summaries and cross-seed CDFs.

MOS proxy (no pixels exist here, so PSNR-based scoring is not available)::

    D     = decodable frames / frames sent
    R     = log(r_bar / r_min) / log(r_max / r_min)      in [0, 1]
    MOS   = clamp(1 + 3.5 * D * R, 1, 4.5)

``r_bar`` is the mean variant rate over the frames a session delivered in
full, so every played frame counts once whatever its size.  Sessions that are not successfully
decoded score 1.
"""

import bisect
import math
from collections import Counter
from dataclasses import dataclass, field

from .core import US_PER_S

MOS_MIN = 1.0
MOS_MAX = 4.5
DEFAULT_THETA = 0.75


# -- decodability -----------------------------------------------------------

def decodable_frames(gop_record):
    """Per-frame decodability for one GoP.

    ``gop_record`` lists, in coding order starting at the I-frame, whether
    every packet of each frame arrived.  A frame decodes only if it is complete
    and every earlier frame of its GoP decodes.
    """
    out = []
    ok = True
    for complete in gop_record:
        ok = ok and bool(complete)
        out.append(ok)
    return out


def frame_decodable(index, gop_record):
    return decodable_frames(gop_record[: index + 1])[index]


def session_decoded(frames_decodable, frames_sent, full_gops_decodable, theta=DEFAULT_THETA):
    """Playback success: decodable ratio >= theta and at least one intact GoP."""
    if frames_sent <= 0:
        return False
    return frames_decodable / frames_sent >= theta and full_gops_decodable >= 1


def rate_position(r_bar, r_min, r_max):
    if r_max <= r_min:
        raise ValueError("r_max must exceed r_min")
    if r_bar <= r_min:
        return 0.0
    if r_bar >= r_max:
        return 1.0
    return math.log(r_bar / r_min) / math.log(r_max / r_min)


def mos_score(d_ratio, r_bar, r_min, r_max, decoded=True):
    if not decoded:
        return MOS_MIN
    score = 1.0 + 3.5 * d_ratio * rate_position(r_bar, r_min, r_max)
    return min(max(score, MOS_MIN), MOS_MAX)


def utilization(delivered_bits, capacity_bps, duration_us):
    if duration_us <= 0:
        raise ValueError("duration must be positive")
    return delivered_bits / (capacity_bps * duration_us / US_PER_S)


def aggregate_cdf(values):
    """Empirical CDF as sorted ``(value, cumulative_fraction)`` pairs."""
    values = list(values)
    if not values:
        raise ValueError("cannot build a CDF from no runs")
    counts = Counter(values)
    n = len(values)
    out, acc = [], 0
    for v in sorted(counts):
        acc += counts[v]
        out.append((v, acc / n))
    return out


def coefficient_of_variation(samples):
    n = len(samples)
    if n < 2:
        return 0.0
    mean = sum(samples) / n
    if mean == 0:
        return 0.0
    var = sum((x - mean) ** 2 for x in samples) / n
    return math.sqrt(var) / mean


# -- streaming delay sketch -------------------------------------------------

class DelaySketch:
    """Log-bucketed histogram; quantiles within ~1% relative error."""

    def __init__(self, rel_err=0.01):
        self.gamma = (1 + rel_err) / (1 - rel_err)
        self._log_gamma = math.log(self.gamma)
        self.buckets = Counter()
        self.zeros = 0
        self.count = 0

    def add(self, x):
        self.count += 1
        if x <= 0:
            self.zeros += 1
        else:
            self.buckets[math.ceil(math.log(x) / self._log_gamma)] += 1

    def quantile(self, q):
        if self.count == 0:
            return float("nan")
        rank = q * (self.count - 1)
        seen = self.zeros
        if rank < seen:
            return 0.0
        for k in sorted(self.buckets):
            seen += self.buckets[k]
            if rank < seen:
                return 2 * self.gamma ** k / (self.gamma + 1)
        return 2 * self.gamma ** max(self.buckets) / (self.gamma + 1)


# -- per-flow accounting ----------------------------------------------------

class FlowMetrics:
    """Counters for one flow.  Video flows also keep a per-frame delivery record."""

    def __init__(self, flow_id, kind, duration_us=None):
        self.flow_id = flow_id
        self.kind = kind
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.in_flight = 0  # departed the link, not yet at the sink
        self.bits_sent = 0
        self.delivered_bits = 0
        self.delay_sum = 0
        self.delay_sketch = DelaySketch()
        self.second_bits = Counter()
        self.first_send = None
        self.last_send = None
        # video only
        self.frame_pkts = []
        self.frame_recv = []
        self.frame_drop = []
        self.frame_gop = []
        self.gop_qp = []
        self.gop_rate = []

    # packet events
    def on_send(self, t, size):
        self.sent += 1
        self.bits_sent += size * 8
        self.second_bits[t // US_PER_S] += size * 8
        if self.first_send is None:
            self.first_send = t
        self.last_send = t

    def on_drop(self, frame=None):
        self.dropped += 1
        if frame is not None:
            self.frame_drop[frame] += 1

    def on_depart(self):
        self.in_flight += 1

    def on_deliver(self, size, delay, frame=None):
        self.in_flight -= 1
        self.delivered += 1
        self.delivered_bits += size * 8
        self.delay_sum += delay
        self.delay_sketch.add(delay)
        if frame is not None:
            self.frame_recv[frame] += 1

    # video bookkeeping
    def new_gop(self, qp, rate):
        self.gop_qp.append(qp)
        self.gop_rate.append(rate)
        return len(self.gop_qp) - 1

    def new_frame(self, gop, n_packets):
        self.frame_pkts.append(n_packets)
        self.frame_recv.append(0)
        self.frame_drop.append(0)
        self.frame_gop.append(gop)
        return len(self.frame_pkts) - 1

    # derived
    @property
    def loss_ratio(self):
        return self.dropped / self.sent if self.sent else 0.0

    @property
    def mean_delay_us(self):
        return self.delay_sum / self.delivered if self.delivered else 0.0

    def residual(self):
        return self.sent - self.delivered - self.dropped

    def per_second_rates(self):
        """Bits/s in each whole second between the flow's first and last send."""
        if self.first_send is None:
            return []
        lo = self.first_send // US_PER_S
        hi = self.last_send // US_PER_S
        # partial first and last seconds are skipped
        return [self.second_bits.get(s, 0) for s in range(lo + 1, hi)]

    def decode_stats(self):
        """(frames_sent, frames_decodable, full_gops_decodable, r_bar).

        Frames with packets still in the network at the end are left out.
        """
        gops = {}
        for f, g in enumerate(self.frame_gop):
            gops.setdefault(g, []).append(f)
        sent = dec = full = 0
        wbits = wsum = 0.0
        for g, frames in gops.items():
            record = []
            for f in frames:
                if self.frame_recv[f] + self.frame_drop[f] < self.frame_pkts[f]:
                    break  # unresolved: this frame and the rest of the GoP are excluded
                record.append(self.frame_recv[f] == self.frame_pkts[f])
            if not record:
                continue
            flags = decodable_frames(record)
            sent += len(record)
            dec += sum(flags)
            if len(record) == len(frames) and all(flags):
                full += 1
            got = sum(record)
            wbits += got * self.gop_rate[g]
            wsum += got
        r_bar = wbits / wsum if wsum else 0.0
        return sent, dec, full, r_bar


@dataclass
class FlowSummary:
    flow: str
    kind: str
    admitted: bool
    decoded: bool
    mos: float
    mean_delay_ms: float
    loss_ratio: float
    delivered_bits: int
    packets_sent: int = 0
    packets_delivered: int = 0
    packets_dropped: int = 0
    residual: int = 0
    decodable_ratio: float = 0.0
    mean_qp: float = 0.0
    rate_cv: float = 0.0


SUMMARY_HEADER = ["flow", "kind", "admitted", "decoded", "mos", "mean_delay_ms",
                  "loss_ratio", "delivered_bits"]


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


@dataclass
class RunSummary:
    architecture: str
    seed: int
    flows: list = field(default_factory=list)
    sessions_requested: int = 0
    sessions_admitted: int = 0
    sessions_decoded: int = 0
    utilization: float = 0.0
    events: int = 0
    conservation_violations: int = 0
    max_queue_occupancy: int = 0
    queue_capacity: int = 0

    @property
    def video(self):
        return [f for f in self.flows if f.kind == "video" and f.admitted]

    @property
    def ftp(self):
        return [f for f in self.flows if f.kind == "ftp"]

    def _mean(self, attr, flows=None):
        flows = self.video if flows is None else flows
        return sum(getattr(f, attr) for f in flows) / len(flows) if flows else 0.0

    @property
    def mean_mos(self):
        return self._mean("mos") if self.video else MOS_MIN

    @property
    def mean_loss(self):
        return self._mean("loss_ratio")

    @property
    def mean_delay_ms(self):
        return self._mean("mean_delay_ms")

    @property
    def mean_transmitted(self):
        return self._mean("packets_sent")

    def run_metrics(self):
        """The per-run means that feed the cross-seed CDFs."""
        return {
            "mos": self.mean_mos,
            "sessions": self.sessions_decoded,
            "loss_ratio": self.mean_loss,
            "delay_ms": self.mean_delay_ms,
            "transmitted_packets": self.mean_transmitted,
            "utilization": self.utilization,
        }

    def rows(self):
        for f in self.flows:
            yield [f.flow, f.kind, int(f.admitted), int(f.decoded), _fmt(f.mos),
                   _fmt(f.mean_delay_ms), _fmt(f.loss_ratio), f.delivered_bits]


def median(xs):
    xs = sorted(xs)
    if not xs:
        raise ValueError("median of empty sequence")
    m = len(xs) // 2
    return xs[m] if len(xs) % 2 else (xs[m - 1] + xs[m]) / 2


def cdf_at(cdf, x):
    """Fraction of runs with value <= x."""
    vals = [v for v, _ in cdf]
    i = bisect.bisect_right(vals, x)
    return cdf[i - 1][1] if i else 0.0
