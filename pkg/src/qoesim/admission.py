"""QoE-aware admission control at the gateway.

The gateway keeps a measured rate ``x_i`` and activity probability ``p_i`` for
every admitted video session and derives an inflated aggregate-load estimate
from them::

    mu_s     = sum_i x_i * p_i
    epsilon  = beta * mu_s * (n - 1) / n            ("literal")
             = beta * (mu_s / n) * (n - 1) / n      ("per_session")
    pro_iaar = mu_s + n * epsilon

A request is admitted at the first quantizer rung k = 2, 3, ..., 31 whose mean
rate ``x_new`` satisfies ``pro_iaar + x_new <= C_l``; if none does it is
rejected.  Work per request is linear in the number of rungs tried
(T(k) = 12 + 4k elementary steps in the worst case).

``beta`` is either a fixed experimental constant or ``alpha + C_l / (delta * n)``
with C_l in Mbps.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

from .core import US_PER_S

log = logging.getLogger(__name__)

QP_MIN, QP_MAX = 2, 31

EPSILON_MODES = ("literal", "per_session")
BETA_MODES = ("experimental", "modeled")

# Lower clamp for a modeled beta that leaves (0, 1].
BETA_FLOOR = 1e-6


class AdmissionError(ValueError):
    pass


@dataclass(frozen=True)
class BetaCoefficients:
    alpha: float
    delta: float

    def __post_init__(self):
        if self.delta == 0:
            raise AdmissionError("delta must be non-zero")


@dataclass
class SessionRecord:
    session_id: str
    measured_rate: float  # x_i(t), bps
    activity: float = 1.0  # p_i(t)
    admitted_qp: int = QP_MIN

    def __post_init__(self):
        if not 0.0 <= self.activity <= 1.0:
            raise AdmissionError("activity probability must lie in [0, 1]")
        if self.measured_rate < 0:
            raise AdmissionError("measured rate must be non-negative")


@dataclass
class AdmissionState:
    link_capacity: float  # C_l, bps
    beta_mode: str = "experimental"
    beta_value: float = 0.9
    coefficients: BetaCoefficients = None
    epsilon_mode: str = "literal"
    sessions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.link_capacity <= 0:
            raise AdmissionError("link capacity must be positive")
        if self.beta_mode not in BETA_MODES:
            raise AdmissionError(f"unknown beta mode {self.beta_mode!r}")
        if self.epsilon_mode not in EPSILON_MODES:
            raise AdmissionError(f"unknown epsilon mode {self.epsilon_mode!r}")
        if self.beta_mode == "experimental" and not 0 < self.beta_value <= 1:
            raise AdmissionError("beta must lie in (0,1]")
        if self.beta_mode == "modeled" and self.coefficients is None:
            raise AdmissionError("modeled beta needs alpha/delta coefficients")

    @property
    def n(self):
        return len(self.sessions)

    def add(self, record):
        if record.session_id in self.sessions:
            raise AdmissionError(f"session {record.session_id!r} already admitted")
        self.sessions[record.session_id] = record


def mu_s(state):
    """Expected total aggregate rate: sum of x_i * p_i."""
    return sum(s.measured_rate * s.activity for s in state.sessions.values())


def modeled_beta(alpha, delta, capacity_mbps, n):
    """alpha + C_l / (delta * n), unclamped, with C_l in Mbps."""
    if n <= 0:
        raise AdmissionError("modeled beta needs at least one session")
    if delta == 0:
        raise AdmissionError("delta must be non-zero")
    return alpha + capacity_mbps / (delta * n)


def beta(state):
    if state.beta_mode == "experimental":
        return state.beta_value
    c = state.coefficients
    b = modeled_beta(c.alpha, c.delta, state.link_capacity / 1e6, state.n)
    if not 0 < b <= 1:
        clamped = min(max(b, BETA_FLOOR), 1.0)
        log.warning("modeled beta %.4f outside (0,1] for n=%d; clamped to %.4g", b, state.n, clamped)
        b = clamped
    return b


def epsilon(state, mu, b):
    n = state.n
    if n < 1:
        raise AdmissionError("epsilon is undefined without sessions")
    if state.epsilon_mode == "literal":
        return b * mu * (n - 1) / n
    return b * (mu / n) * (n - 1) / n


def pro_iaar(state):
    """Inflated aggregate-load estimate mu_s + n * epsilon (0 with no sessions)."""
    n = state.n
    if n == 0:
        return 0.0
    mu = mu_s(state)
    return mu + n * epsilon(state, mu, beta(state))


@dataclass
class Decision:
    accepted: bool
    qp: int = None
    rate: float = None
    # audit fields
    n_before: int = 0
    mu_s: float = 0.0
    beta: float = None
    epsilon: float = 0.0
    pro_iaar: float = 0.0
    tried: list = field(default_factory=list)


def _rates_of(ladder):
    return ladder.rates if hasattr(ladder, "rates") else dict(ladder)


def evaluate(state, ladder):
    """Run the rung scan without changing ``state``."""
    rates = _rates_of(ladder)
    n = state.n
    d = Decision(accepted=False, n_before=n)
    if n > 0:
        d.mu_s = mu_s(state)
        d.beta = beta(state)
        d.epsilon = epsilon(state, d.mu_s, d.beta)
        d.pro_iaar = d.mu_s + n * d.epsilon
    cap = state.link_capacity
    for k in range(QP_MIN, QP_MAX + 1):
        x_new = rates[k]
        d.tried.append(x_new)
        if d.pro_iaar + x_new <= cap:
            d.accepted, d.qp, d.rate = True, k, x_new
            break
    return d


def admit(state, ladder, session_id=None, activity=1.0):
    """Decide a request; on acceptance the session joins ``state`` at x_i = x_new."""
    d = evaluate(state, ladder)
    if d.accepted and session_id is not None:
        state.add(SessionRecord(session_id, d.rate, activity, d.qp))
    return d


def update_measurement(state, session_id, window_rate):
    try:
        rec = state.sessions[session_id]
    except KeyError:
        raise AdmissionError(f"unknown session {session_id!r}") from None
    if window_rate < 0:
        raise AdmissionError("measured rate must be non-negative")
    rec.measured_rate = window_rate


def release(state, session_id):
    try:
        del state.sessions[session_id]
    except KeyError:
        raise AdmissionError(f"unknown session {session_id!r}") from None


class RateMeter:
    """Sliding-window byte counter for one flow at the gateway."""

    __slots__ = ("window", "_samples", "_bits")

    def __init__(self, window_us):
        if window_us <= 0:
            raise ValueError("window must be positive")
        self.window = window_us
        self._samples = deque()
        self._bits = 0

    def add(self, t, bits):
        self._samples.append((t, bits))
        self._bits += bits

    def _expire(self, now):
        cutoff = now - self.window
        s = self._samples
        while s and s[0][0] <= cutoff:
            self._bits -= s.popleft()[1]

    def bits(self, now):
        self._expire(now)
        return self._bits

    def rate(self, now):
        """Bits seen in (now - window, now] divided by the window, in bps."""
        return self.bits(now) * US_PER_S / self.window


AUDIT_HEADER = ["time_us", "session_id", "n_before", "mu_s", "beta", "epsilon",
                "pro_iaar", "x_new_tried", "decision", "accepted_qp"]


def audit_row(t, session_id, d):
    # Floats are written with repr() so the line-8 check can be replayed exactly.
    return [
        t, session_id, d.n_before, repr(float(d.mu_s)),
        "" if d.beta is None else repr(float(d.beta)),
        repr(float(d.epsilon)), repr(float(d.pro_iaar)),
        ";".join(repr(float(x)) for x in d.tried),
        "accepted" if d.accepted else "rejected",
        d.qp if d.accepted else "",
    ]
