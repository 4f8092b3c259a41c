"""Simulation kernel: integer virtual time, the future-event list and seeded streams.

Time is kept in integer microseconds so that replays are bit-stable and
event ordering never depends on float rounding.  Rates are integer bits per
second.

Random numbers come from numpy's PCG64 bit generator.  Every entity (a video
source, an FTP source, the arrival process...) draws from its own stream,
derived as ``SeedSequence(seed, spawn_key=(crc32(entity_name),))``.  PCG64 and
SeedSequence are specified bit-exactly by numpy, so the same seed gives the
same draws on every platform, and adding an entity never perturbs the draws
of another.
"""

import enum
import heapq
import zlib

import numpy as np

US_PER_S = 1_000_000
US_PER_MS = 1_000

# Overflow guard: times beyond this are treated as a logic error.
MAX_TIME_US = 2**63 - 1


class SimulationError(RuntimeError):
    """Fatal logic error inside the engine (e.g. scheduling into the past)."""


def seconds(s):
    """Convert seconds (int or float) to integer microseconds."""
    t = int(round(s * US_PER_S))
    check_time(t)
    return t


def millis(ms):
    t = int(round(ms * US_PER_MS))
    check_time(t)
    return t


def to_seconds(t_us):
    return t_us / US_PER_S


def check_time(t):
    if t < 0:
        raise SimulationError(f"negative time {t}")
    if t > MAX_TIME_US:
        raise SimulationError(f"time overflow: {t} us")
    return t


def mbps(x):
    """Megabits per second to integer bits per second."""
    return int(round(x * 1_000_000))


def bits_to_rate(bits, window_us):
    """Average rate in bps of ``bits`` observed over ``window_us``."""
    if window_us <= 0:
        raise ValueError("window must be positive")
    return bits * US_PER_S / window_us


def serialization_us(size_bytes, rate_bps):
    """Serialization time of a packet, rounded up to the next microsecond."""
    return -(-size_bytes * 8 * US_PER_S // rate_bps)


class EventKind(enum.Enum):
    PacketArrival = "PacketArrival"
    PacketDeparture = "PacketDeparture"
    GopBoundary = "GopBoundary"
    SessionRequest = "SessionRequest"
    FeedbackReport = "FeedbackReport"
    MeasurementTick = "MeasurementTick"
    SimEnd = "SimEnd"


class Event:
    """A scheduled callback.  ``sequence`` is assigned by the engine."""

    __slots__ = ("fire_at", "sequence", "kind", "entity", "action", "args")

    def __init__(self, fire_at, kind, entity, action, args=()):
        self.fire_at = fire_at
        self.sequence = -1
        self.kind = kind
        self.entity = entity
        self.action = action
        self.args = args

    def __repr__(self):
        return f"Event({self.fire_at}, #{self.sequence}, {self.kind.name}, {self.entity})"


class Engine:
    """Single-threaded discrete-event engine.

    Events fire in ``(fire_at, sequence)`` order; ``sequence`` is a global
    insertion counter, so ties are broken deterministically by scheduling
    order.
    """

    def __init__(self, log_events=False):
        self.now = 0
        self._heap = []
        self._seq = 0
        self.processed = 0
        self.log_events = log_events
        self.event_log = []

    def schedule(self, ev):
        if ev.fire_at < self.now:
            raise SimulationError(
                f"cannot schedule {ev.kind.name} at {ev.fire_at} us, clock is {self.now} us")
        check_time(ev.fire_at)
        ev.sequence = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (ev.fire_at, ev.sequence, ev))
        return ev

    def at(self, fire_at, kind, entity, action, *args):
        return self.schedule(Event(fire_at, kind, entity, action, args))

    def after(self, delay, kind, entity, action, *args):
        return self.schedule(Event(self.now + delay, kind, entity, action, args))

    @property
    def pending(self):
        return len(self._heap)

    @property
    def scheduled(self):
        return self._seq

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def run_until(self, end):
        """Process every event with ``fire_at <= end``; leave the clock at ``end``."""
        check_time(end)
        if end < self.now:
            raise SimulationError(f"run_until({end}) is before clock {self.now}")
        heap = self._heap
        pop = heapq.heappop
        count = 0
        log = self.event_log if self.log_events else None
        while heap and heap[0][0] <= end:
            t, seq, ev = pop(heap)
            self.now = t
            if log is not None:
                log.append((t, seq, ev.kind.name, ev.entity))
            ev.action(*ev.args)
            count += 1
        self.now = end
        self.processed += count
        return count

    def dump_event_log(self, fh):
        """Write the event log as tab-separated lines: time_us, sequence, kind, entity."""
        for t, seq, kind, entity in self.event_log:
            fh.write(f"{t}\t{seq}\t{kind}\t{entity}\n")


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed, entity):
    """Independent PCG64 generator for one entity under a run seed."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(seed, spawn_key=(stream_key(entity),))
    return np.random.Generator(np.random.PCG64(ss))
