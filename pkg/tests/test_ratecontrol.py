import pytest
from hypothesis import given, strategies as st

from qoesim.ratecontrol import ControllerState, LeakyBucket, bucket_for, on_feedback, on_gop_boundary
from qoesim.traces import ContentProfile, generate_ladder


def test_ecn_moves_down_one_rung():
    c = ControllerState(current_qp=5)
    assert on_feedback(c, True) == "ecn"
    assert c.pending_qp == 6


def test_ladder_floor():
    c = ControllerState(current_qp=31)
    on_feedback(c, True)
    assert c.pending_qp == 31


def test_loss_counts_as_congestion():
    c = ControllerState(current_qp=5)
    assert on_feedback(c, False, loss_events=2) == "loss"
    assert c.pending_qp == 6


def test_three_quiet_intervals_step_up():
    c = ControllerState(current_qp=6)
    assert on_feedback(c, False) is None
    assert on_feedback(c, False) is None
    assert on_feedback(c, False) == "quiet"
    assert c.pending_qp == 5


def test_congestion_resets_quiet_counter():
    c = ControllerState(current_qp=6)
    on_feedback(c, False)
    on_feedback(c, False)
    on_feedback(c, True)
    on_feedback(c, False)
    on_feedback(c, False)
    assert c.pending_qp == 7


def test_ceiling_limits_climb():
    c = ControllerState(current_qp=9, ceiling_qp=9)
    for _ in range(3):
        on_feedback(c, False)
    assert c.pending_qp == 9
    with pytest.raises(ValueError):
        ControllerState(current_qp=4, ceiling_qp=6)


def test_gop_boundary_applies_pending():
    c = ControllerState(current_qp=6, pending_qp=7)
    assert on_gop_boundary(c) == 7 and c.pending_qp is None
    assert on_gop_boundary(c) == 7


def test_non_adaptive_ignores_feedback():
    c = ControllerState(mode="non_adaptive")
    for _ in range(10):
        assert on_feedback(c, True, 5) is None
    assert on_gop_boundary(c) == 2
    with pytest.raises(ValueError):
        ControllerState(current_qp=4, mode="non_adaptive")


def test_bucket_small_frame_released_at_frame_time():
    b = LeakyBucket(1e6, 1e6)
    assert [b.shape(8000, 1000) for _ in range(5)] == [1000] * 5


def test_bucket_long_run_rate_is_drain_rate():
    b = LeakyBucket(1e6, 80_000)  # 1 Mbps drain, 10 kB depth
    # offered at 2 Mbps: one 8000-bit packet every 4 ms for 20 s
    last = 0
    for i in range(5000):
        last = b.shape(8000, i * 4000)
    bits = 5000 * 8000
    assert bits / (last / 1e6) == pytest.approx(1e6, rel=0.01)


def test_depth_of_one_gop_passes_i_frame_unshaped():
    p = ContentProfile("x", "QCIF", 1_600_000, 870, burstiness=0.25)
    trace = generate_ladder(p, 1)[2]
    drain, depth = bucket_for(trace)
    assert drain == pytest.approx(1.2 * trace.mean_rate)
    b = LeakyBucket(drain, depth)
    i_bits = int(trace.sizes[0]) * 8
    assert i_bits < depth
    assert b.shape(i_bits, 0) == 0


@given(st.lists(st.tuples(st.integers(min_value=0, max_value=3_000_000),
                          st.integers(min_value=8, max_value=12_000)), min_size=1, max_size=200),
       st.floats(min_value=1e4, max_value=1e7), st.floats(min_value=1e4, max_value=1e6))
def test_bucket_never_drops_and_keeps_fifo(offers, drain, depth):
    b = LeakyBucket(drain, depth)
    offers.sort()
    out = [b.shape(bits, t) for t, bits in offers]
    assert len(out) == len(offers)
    assert all(o >= t for o, (t, _) in zip(out, offers))
    assert out == sorted(out)
    assert b.fill <= max(depth, max(bits for _, bits in offers)) + 1e-6


@given(st.lists(st.tuples(st.booleans(), st.integers(min_value=0, max_value=3)), max_size=100),
       st.integers(min_value=2, max_value=31))
def test_qp_stays_in_ladder(reports, start):
    c = ControllerState(current_qp=start)
    for ecn, loss in reports:
        on_feedback(c, ecn, loss)
        q = on_gop_boundary(c)
        assert 2 <= q <= 31
