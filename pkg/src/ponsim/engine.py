"""Deterministic discrete-event core: clock, event queue, seeded substreams."""

from __future__ import annotations

import heapq
import zlib
from enum import IntEnum
from typing import Any, Callable, NamedTuple

import numpy as np


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


class EventKind(IntEnum):
    TASK_ARRIVAL = 1
    TRANSFER_DRAINED = 2
    TRANSFER_COMPLETE = 3
    EXECUTION_COMPLETE = 4
    CONTAINER_DEPLOYED = 5
    PROFILE_STATE_CHANGE = 6
    BROKER_LOOKUP = 7
    SIMULATION_END = 8


class Event(NamedTuple):
    fire_time: float
    sequence: int
    kind: EventKind
    payload: Any


def _trace_key(payload: Any) -> Any:
    if isinstance(payload, tuple):
        return tuple(_trace_key(p) for p in payload)
    ident = getattr(payload, "ident", None)
    if ident is not None:
        return (type(payload).__name__, ident)
    if callable(payload):
        return getattr(payload, "__qualname__", type(payload).__name__)
    return payload


class Engine:
    """Single-threaded event loop.

    Events are ordered by ``(fire_time, sequence)``; ``sequence`` is the
    insertion counter, so payloads are never compared.
    """

    def __init__(self, record_trace: bool = False):
        self.now = 0.0
        self._queue: list[Event] = []
        self._seq = 0
        self._cancelled: set[int] = set()
        self._handlers: dict[EventKind, Callable[[Any], None]] = {}
        self.processed = 0
        self.trace: list[tuple] | None = [] if record_trace else None
        self.observer: Callable[[Event], None] | None = None  # called after every handled event

    def on(self, kind: EventKind, handler: Callable[[Any], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, fire_time: float, kind: EventKind, payload: Any = None) -> Event:
        if fire_time < self.now:
            raise SchedulingError(
                f"cannot schedule {kind.name} at t={fire_time!r}; clock is at t={self.now!r}"
            )
        event = Event(fire_time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: float, kind: EventKind, payload: Any = None) -> Event:
        return self.schedule(self.now + delay, kind, payload)

    def cancel(self, event: Event) -> None:
        self._cancelled.add(event.sequence)

    def __len__(self) -> int:
        return len(self._queue) - len(self._cancelled)

    def peek_time(self) -> float | None:
        while self._queue and self._queue[0].sequence in self._cancelled:
            self._cancelled.discard(heapq.heappop(self._queue).sequence)
        return self._queue[0].fire_time if self._queue else None

    def run(self, until: float) -> int:
        """Process every event with ``fire_time <= until``; leave the clock at ``until``.

        Returns the number of events handled by this call.
        """
        if until < self.now:
            raise SchedulingError(f"run(until={until!r}) is before the clock t={self.now!r}")
        queue = self._queue
        cancelled = self._cancelled
        handlers = self._handlers
        trace = self.trace
        observer = self.observer
        pop = heapq.heappop
        handled = 0
        while queue and queue[0].fire_time <= until:
            event = pop(queue)
            if cancelled and event.sequence in cancelled:
                cancelled.discard(event.sequence)
                continue
            self.now = event.fire_time
            if trace is not None:
                trace.append((event.fire_time, event.kind.name, _trace_key(event.payload)))
            handler = handlers.get(event.kind)
            if handler is not None:
                handler(event.payload)
            if observer is not None:
                observer(event)
            handled += 1
        self.now = until
        self.processed += handled
        return handled


class RandomStreams:
    """Named, independent substreams derived from one 64-bit seed.

    The substream for a name depends only on ``(seed, name)``, so adding a
    stream never perturbs the draws of another.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        stream = self._streams.get(name)
        if stream is None:
            key = zlib.crc32(name.encode("utf-8"))
            seq = np.random.SeedSequence(self.seed, spawn_key=(key, len(name)))
            stream = np.random.Generator(np.random.PCG64(seq))
            self._streams[name] = stream
        return stream
