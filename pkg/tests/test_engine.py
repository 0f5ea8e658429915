import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ponsim.engine import Engine, EventKind, RandomStreams, SchedulingError


def _collect(engine, kind=EventKind.TASK_ARRIVAL):
    seen = []
    engine.on(kind, lambda payload: seen.append((engine.now, payload)))
    return seen


def test_event_fires_at_its_time():
    eng = Engine()
    seen = _collect(eng)
    eng.run(3.0)
    eng.schedule(5.0, EventKind.TASK_ARRIVAL, "a")
    assert len(eng) == 1
    eng.run(10.0)
    assert seen == [(5.0, "a")]


def test_same_time_events_fire_in_insertion_order():
    eng = Engine()
    seen = _collect(eng)
    e1 = eng.schedule(5.0, EventKind.TASK_ARRIVAL, "first")
    e2 = eng.schedule(5.0, EventKind.TASK_ARRIVAL, "second")
    assert e2.sequence == e1.sequence + 1
    eng.run(5.0)
    assert [p for _, p in seen] == ["first", "second"]


def test_scheduling_in_the_past_is_an_error():
    eng = Engine()
    eng.run(3.0)
    with pytest.raises(SchedulingError):
        eng.schedule(2.0, EventKind.TASK_ARRIVAL)


def test_empty_run_advances_clock():
    eng = Engine()
    assert eng.run(10.0) == 0
    assert eng.now == 10.0


def test_run_stops_at_horizon_inclusive():
    eng = Engine()
    seen = _collect(eng)
    for t in (1.0, 2.0, 2.5):
        eng.schedule(t, EventKind.TASK_ARRIVAL, t)
    assert eng.run(2.0) == 2
    assert eng.now == 2.0
    assert eng.peek_time() == 2.5
    eng.run(3.0)
    assert [p for _, p in seen] == [1.0, 2.0, 2.5]


def test_cancelled_event_is_skipped():
    eng = Engine()
    seen = _collect(eng)
    ev = eng.schedule(1.0, EventKind.TASK_ARRIVAL, "x")
    eng.schedule(2.0, EventKind.TASK_ARRIVAL, "y")
    eng.cancel(ev)
    assert len(eng) == 1
    eng.run(5.0)
    assert [p for _, p in seen] == ["y"]


def test_handler_may_schedule_follow_ups():
    eng = Engine()
    times = []

    def handler(n):
        times.append(eng.now)
        if n:
            eng.schedule_in(0.5, EventKind.TASK_ARRIVAL, n - 1)

    eng.on(EventKind.TASK_ARRIVAL, handler)
    eng.schedule(0.0, EventKind.TASK_ARRIVAL, 3)
    eng.run(10.0)
    assert times == [0.0, 0.5, 1.0, 1.5]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=100, allow_nan=False), min_size=1, max_size=60))
def test_dequeue_order_is_time_then_sequence(times):
    eng = Engine(record_trace=True)
    order = []
    eng.on(EventKind.TASK_ARRIVAL, lambda i: order.append(i))
    for i, t in enumerate(times):
        eng.schedule(t, EventKind.TASK_ARRIVAL, i)
    eng.run(100.0)
    assert order == sorted(range(len(times)), key=lambda i: (times[i], i))
    clocks = [rec[0] for rec in eng.trace]
    assert clocks == sorted(clocks)


def test_random_streams_are_reproducible_and_independent():
    a = RandomStreams(42)
    b = RandomStreams(42)
    assert np.array_equal(a.get("user:0:x").random(5), b.get("user:0:x").random(5))
    # drawing from one stream does not disturb another
    c = RandomStreams(42)
    c.get("user:1:x").random(1000)
    assert np.array_equal(c.get("user:0:x").random(5), RandomStreams(42).get("user:0:x").random(5))
    assert not np.array_equal(a.get("user:1:x").random(5), a.get("user:2:x").random(5))
    assert not np.array_equal(RandomStreams(1).get("s").random(5), RandomStreams(2).get("s").random(5))


def test_get_returns_the_same_generator_object():
    s = RandomStreams(3)
    assert s.get("n") is s.get("n")
