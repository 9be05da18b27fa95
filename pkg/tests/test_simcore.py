"""Event engine: ordering, ties, horizon, clock, error paths."""

import pytest
from hypothesis import given, strategies as st

from ilaunch.simcore import (
    Engine,
    EventKind,
    SimulationError,
    format_trace_line,
    us_from_s,
)

K = EventKind.TASK_COMPLETE  # payload-free stand-in kind for engine tests


def collecting_engine():
    seen = []
    engine = Engine(handler=lambda ev: seen.append(ev))
    return engine, seen


def test_events_fire_in_time_order():
    engine, seen = collecting_engine()
    for t in (1_000_000, 3_000_000, 2_000_000):
        engine.schedule(t, K, (t,))
    engine.run()
    assert [ev.time for ev in seen] == [1_000_000, 2_000_000, 3_000_000]


def test_same_time_events_fire_in_schedule_order():
    engine, seen = collecting_engine()
    first = engine.schedule(5_000_000, K, ("a",))
    second = engine.schedule(5_000_000, K, ("b",))
    assert second > first
    engine.run()
    assert [ev.payload for ev in seen] == [("a",), ("b",)]


def test_schedule_at_current_time_is_allowed():
    engine, seen = collecting_engine()
    engine.schedule(0, K)
    engine.run()
    assert len(seen) == 1 and seen[0].time == 0


def test_scheduling_in_the_past_raises():
    fired = []

    def handler(ev):
        fired.append(ev)
        if ev.time == 2_000_000:
            with pytest.raises(SimulationError):
                engine.schedule(1_000_000, K)

    engine = Engine(handler)
    engine.schedule(2_000_000, K)
    engine.run()
    assert fired


def test_empty_run_returns_zero():
    engine, _ = collecting_engine()
    assert engine.run() == 0
    assert engine.now == 0


def test_horizon_cuts_processing():
    engine, seen = collecting_engine()
    engine.schedule(1_000_000, K)
    engine.schedule(3_000_000, K)
    final = engine.run(horizon=2_500_000)
    assert [ev.time for ev in seen] == [1_000_000]
    assert final == 2_500_000
    assert engine.processed_count == 1
    assert engine.scheduled_count == 2


def test_clock_ends_at_last_event_without_horizon():
    engine, _ = collecting_engine()
    engine.schedule(1_000_000, K)
    assert engine.run() == 1_000_000


def test_handler_chaining_keeps_clock_consistent():
    times = []

    def handler(ev):
        times.append(engine.now)
        if ev.time < 3:
            engine.schedule(ev.time + 1, K)

    engine = Engine(handler)
    engine.schedule(0, K)
    engine.run()
    assert times == [0, 1, 2, 3]


def test_trace_line_format():
    engine = Engine(handler=lambda ev: None)
    lines = []
    engine.trace_fn = lambda ev: lines.append(format_trace_line(ev))
    engine.schedule(1_500_000, K, (7, "x"))
    engine.run()
    assert lines == ["1500000\t1\ttask-complete\t7 x"]


def test_us_from_s_rounding():
    assert us_from_s(0.1) == 100_000
    assert us_from_s(1e-6) == 1
    assert us_from_s(0) == 0


@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=200))
def test_arbitrary_schedules_observe_total_order(times):
    engine, seen = collecting_engine()
    for t in times:
        engine.schedule(t, K)
    engine.run()
    observed = [(ev.time, ev.seq) for ev in seen]
    assert observed == sorted(observed)
    assert len(seen) == len(times)
