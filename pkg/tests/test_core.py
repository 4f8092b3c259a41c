import pytest
from hypothesis import given, strategies as st

from qoesim.core import (US_PER_S, Engine, EventKind, SimulationError, make_rng, millis,
                         seconds, serialization_us)


def _noop(*a):
    pass


def test_schedule_order_by_time():
    eng = Engine()
    fired = []
    eng.at(5, EventKind.MeasurementTick, "a", fired.append, 5)
    eng.at(3, EventKind.MeasurementTick, "b", fired.append, 3)
    eng.run_until(10)
    assert fired == [3, 5]


def test_ties_broken_by_sequence():
    eng = Engine()
    fired = []
    evs = [eng.at(7, EventKind.PacketArrival, "x", fired.append, i) for i in range(10)]
    eng.run_until(7)
    assert fired == list(range(10))
    assert [e.sequence for e in evs] == sorted(e.sequence for e in evs)


def test_schedule_in_past_is_fatal():
    eng = Engine()
    eng.run_until(10)
    with pytest.raises(SimulationError):
        eng.at(2, EventKind.PacketArrival, "x", _noop)


def test_run_until_empty_sets_clock():
    eng = Engine()
    assert eng.run_until(seconds(500)) == 0
    assert eng.now == seconds(500)


def test_self_rescheduling_tick_counts():
    eng = Engine()

    def tick():
        eng.after(US_PER_S, EventKind.MeasurementTick, "tick", tick)

    eng.at(US_PER_S, EventKind.MeasurementTick, "tick", tick)
    assert eng.run_until(seconds(10)) == 10


def test_event_log_dump(tmp_path):
    eng = Engine(log_events=True)
    eng.at(1, EventKind.SimEnd, "sim", _noop)
    eng.run_until(5)
    p = tmp_path / "ev.log"
    with open(p, "w") as fh:
        eng.dump_event_log(fh)
    assert p.read_text() == "1\t0\tSimEnd\tsim\n"


def test_unit_helpers():
    assert millis(1.5) == 1500
    assert seconds(2) == 2_000_000
    # 1052 B at 7 Mbps
    assert serialization_us(1052, 7_000_000) == 1203  # 1202.29 us rounded up


def test_rng_streams_independent_and_reproducible():
    a = make_rng(1, "video0").random(5)
    b = make_rng(1, "video0").random(5)
    c = make_rng(1, "video1").random(5)
    assert (a == b).all()
    assert not (a == c).all()


@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=60))
def test_dequeue_is_sorted_by_time_then_sequence(times):
    eng = Engine()
    fired = []
    for i, t in enumerate(times):
        eng.at(t, EventKind.PacketArrival, "x", fired.append, (t, i))
    eng.run_until(max(times))
    assert fired == sorted(fired)
    assert eng.now == max(times)
