import random

import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import beta_exact, brute_force_rung, pro_iaar_exact
from qoesim import admission as A


def state(rates=(), probs=None, beta=0.5, mode="literal", cap=10e6):
    s = A.AdmissionState(cap, beta_value=beta, epsilon_mode=mode)
    probs = probs or [1.0] * len(rates)
    for i, (x, p) in enumerate(zip(rates, probs)):
        s.add(A.SessionRecord(f"s{i}", x, p))
    return s


def test_mu_s_examples():
    assert A.mu_s(state()) == 0
    assert A.mu_s(state([1e6, 2e6])) == 3e6
    assert A.mu_s(state([4e6], [0.5])) == 2e6


def test_beta_table_values():
    assert A.modeled_beta(-0.54, 0.96, 32, 24) == pytest.approx(0.849, abs=0.001)
    assert A.modeled_beta(-0.1, 0.4, 7, 20) == pytest.approx(0.775, abs=1e-9)
    s = state([1e6] * 5, beta=0.9)
    assert A.beta(s) == 0.9


def test_modeled_beta_clamped_with_warning(caplog):
    s = A.AdmissionState(7e6, beta_mode="modeled", coefficients=A.BetaCoefficients(-0.1, 0.4))
    s.add(A.SessionRecord("a", 1e6))
    assert A.beta(s) == 1.0  # 17.4 unclamped for n = 1
    assert "clamped" in caplog.text


def test_epsilon_examples():
    assert A.epsilon(state([3e6]), 3e6, 0.7) == 0
    assert A.epsilon(state([1e6, 1e6]), 2e6, 0.5) == pytest.approx(0.5e6)
    assert A.epsilon(state([1e6, 1e6], mode="per_session"), 2e6, 0.5) == pytest.approx(0.25e6)


def test_pro_iaar_examples():
    assert A.pro_iaar(state([1e6, 1e6])) == pytest.approx(3e6)
    assert A.pro_iaar(state([5e6])) == 5e6
    assert A.pro_iaar(state()) == 0


def test_admit_examples():
    lad = {k: 4e6 / 2 ** (k - 2) for k in range(2, 32)}
    empty = state(cap=10e6)
    d = A.admit(empty, lad, "new")
    assert d.accepted and d.qp == 2 and empty.n == 1
    # Pro-IAAR of 9 Mbps on a 10 Mbps link: 4, 2, 1 Mbps -> QP 4
    s = state([9e6], cap=10e6)
    assert A.pro_iaar(s) == 9e6
    d = A.admit(s, lad, "x")
    assert (d.accepted, d.qp, d.rate) == (True, 4, 1e6)
    assert s.sessions["x"].measured_rate == 1e6 and s.sessions["x"].admitted_qp == 4
    full = state([11e6], cap=10e6)
    d = A.admit(full, lad, "y")
    assert not d.accepted and full.n == 1 and len(d.tried) == 30


def test_release():
    s = state([1e6])
    A.release(s, "s0")
    assert s.n == 0 and A.pro_iaar(s) == 0
    with pytest.raises(A.AdmissionError):
        A.release(s, "nope")
    s = state([1e6, 2e6, 3e6])
    A.release(s, "s1")
    assert [r.measured_rate for r in s.sessions.values()] == [1e6, 3e6]


def test_rate_meter():
    m = A.RateMeter(1_000_000)
    for i in range(10):
        m.add(i * 100_000, 100_000)
    assert m.rate(999_999) == 1e6
    assert A.RateMeter(1_000_000).rate(5_000_000) == 0


def test_invalid_states():
    with pytest.raises(A.AdmissionError):
        A.AdmissionState(7e6, beta_value=1.3)
    with pytest.raises(A.AdmissionError):
        A.AdmissionState(7e6, beta_mode="modeled")
    with pytest.raises(A.AdmissionError):
        A.BetaCoefficients(0.1, 0.0)
    with pytest.raises(A.AdmissionError):
        A.SessionRecord("a", 1e6, activity=1.5)


def test_audit_row_replays_line8():
    s = state([1e6, 2e6], beta=0.78, mode="per_session", cap=7e6)
    lad = {k: 1.6e6 * 2 / k for k in range(2, 32)}
    d = A.admit(s, lad, "z")
    row = A.audit_row(123, "z", d)
    pro, tried = float(row[6]), [float(x) for x in row[7].split(";")]
    assert row[8] == "accepted" and pro + tried[-1] <= 7e6


rates = st.floats(min_value=0, max_value=10e6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(rates, st.floats(min_value=0, max_value=1)), max_size=32),
       st.floats(min_value=1e-3, max_value=1.0), st.sampled_from(["literal", "per_session"]))
def test_pro_iaar_matches_exact_oracle(sessions, beta, mode):
    s = state([x for x, _ in sessions], [p for _, p in sessions], beta=beta, mode=mode, cap=1e9)
    want = pro_iaar_exact([x for x, _ in sessions], [p for _, p in sessions], beta, mode)
    assert abs(A.pro_iaar(s) - float(want)) <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-1, max_value=1), st.floats(min_value=0.05, max_value=2),
       st.floats(min_value=1, max_value=100), st.integers(min_value=1, max_value=64))
def test_modeled_beta_matches_exact(alpha, delta, cap, n):
    assert A.modeled_beta(alpha, delta, cap, n) == pytest.approx(float(beta_exact(alpha, delta, cap, n)),
                                                                  rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(rates, max_size=16), st.floats(min_value=1e6, max_value=40e6),
       st.floats(min_value=0.05, max_value=1.0), st.integers(min_value=0, max_value=2**32))
def test_admit_is_minimum_fitting_rung(xs, cap, beta, seed):
    rng = random.Random(seed)
    top = rng.uniform(0.1e6, 10e6)
    lad = {k: top * (2 / k) ** rng.uniform(0.5, 2.0) for k in range(2, 32)}
    s = state(xs, beta=beta, mode=rng.choice(["literal", "per_session"]), cap=cap)
    before = A.pro_iaar(s)
    d = A.evaluate(s, lad)
    want = brute_force_rung(before, lad, cap)
    assert d.qp == want
    assert d.accepted == (want is not None)
    if d.accepted:
        assert before + d.rate <= cap


@given(st.lists(rates, min_size=1, max_size=10), st.integers(min_value=0, max_value=9))
def test_release_isolation(xs, idx):
    assume(idx < len(xs))
    s = state(xs)
    others = {k: r.measured_rate for k, r in s.sessions.items() if k != f"s{idx}"}
    A.release(s, f"s{idx}")
    assert {k: r.measured_rate for k, r in s.sessions.items()} == others


@given(st.lists(st.tuples(st.integers(min_value=0, max_value=5_000_000),
                          st.integers(min_value=1, max_value=10_000)), max_size=80),
       st.integers(min_value=1, max_value=2_000_000))
def test_rate_meter_matches_recount(samples, window):
    samples = sorted(samples)
    m = A.RateMeter(window)
    for t, b in samples:
        m.add(t, b)
    now = samples[-1][0] if samples else 0
    want = sum(b for t, b in samples if now - window < t <= now)
    assert m.bits(now) == want
