"""Sender-side rate control: quantizer selection driven by ECN feedback.

A marked (or lossy) feedback interval asks for the next coarser rung; a run of
clean intervals asks for the next finer one.  Requests only take effect at
the next GoP boundary, so every GoP is coded from a single variant.
"""

import math
from dataclasses import dataclass

from .core import US_PER_S

QP_MIN, QP_MAX = 2, 31
MODES = ("non_adaptive", "adaptive")


@dataclass
class ControllerState:
    current_qp: int = QP_MIN
    mode: str = "adaptive"
    step: int = 1
    quiet_needed: int = 3
    pending_qp: int = None
    quiet_intervals: int = 0
    ceiling_qp: int = QP_MIN  # finest rung the source may climb back to

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown controller mode {self.mode!r}")
        if not QP_MIN <= self.current_qp <= QP_MAX:
            raise ValueError(f"QP {self.current_qp} outside {QP_MIN}..{QP_MAX}")
        if self.mode == "non_adaptive" and self.current_qp != QP_MIN:
            raise ValueError("non-adaptive sources are pinned to QP 2")
        if not QP_MIN <= self.ceiling_qp <= self.current_qp:
            raise ValueError("ceiling_qp must lie between QP 2 and the starting QP")
        if self.step < 1 or self.quiet_needed < 1:
            raise ValueError("step and quiet_needed must be >= 1")


def on_feedback(state, ecn_seen, loss_events=0):
    """Update the pending rung from one feedback report.

    Returns the trigger ("ecn", "loss", "quiet") when a new pending rung was
    set, else None.  Non-adaptive sources ignore feedback.
    """
    if state.mode != "adaptive":
        return None
    if ecn_seen or loss_events > 0:
        state.quiet_intervals = 0
        state.pending_qp = min(state.current_qp + state.step, QP_MAX)
        return "ecn" if ecn_seen else "loss"
    state.quiet_intervals += 1
    if state.quiet_intervals >= state.quiet_needed:
        state.quiet_intervals = 0
        state.pending_qp = max(state.current_qp - 1, state.ceiling_qp)
        return "quiet"
    return None


def on_gop_boundary(state):
    """Apply any pending rung; returns the QP for the GoP that starts now."""
    if state.pending_qp is not None:
        state.current_qp = state.pending_qp
        state.pending_qp = None
    return state.current_qp


class LeakyBucket:
    """Virtual-buffer shaper.

    The bucket drains at ``drain_rate`` bps and holds at most ``depth`` bits.
    A packet leaves as soon as it fits; otherwise it waits until enough has
    drained.  Nothing is ever dropped, and release order is arrival order.
    """

    def __init__(self, drain_rate, depth):
        self.fill = 0.0
        self.last_update = 0
        self.last_release = 0
        self.configure(drain_rate, depth)

    def configure(self, drain_rate, depth):
        if drain_rate <= 0 or depth <= 0:
            raise ValueError("drain rate and depth must be positive")
        self.drain_rate = float(drain_rate)
        self.depth = float(depth)

    def _drain(self, t):
        if t > self.last_update:
            self.fill = max(0.0, self.fill - self.drain_rate * (t - self.last_update) / US_PER_S)
            self.last_update = t

    def shape(self, bits, ready_at):
        """Release time (us) of a ``bits``-sized packet handed over at ``ready_at``."""
        t = max(ready_at, self.last_release)
        self._drain(t)
        excess = self.fill + bits - self.depth
        if excess > 0:
            # A packet larger than the whole bucket waits for it to empty.
            wait = min(excess, self.fill) * US_PER_S / self.drain_rate
            t += math.ceil(wait)
            self._drain(t)
        self.fill += bits
        self.last_release = t
        return t


def bucket_for(trace, tolerance=1.2):
    """Default shaper for a variant: depth of one mean GoP, drain at ``tolerance`` x mean rate."""
    gop_bits = trace.mean_rate * trace.gop_length / trace.frame_rate
    return trace.mean_rate * tolerance, gop_bits
