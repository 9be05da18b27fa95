"""Deterministic discrete-event engine.

Simulation time is an integer count of microseconds so that arithmetic is
exact and runs are reproducible bit-for-bit. Events are totally ordered by
(time, seq) where seq is the scheduling order, so same-time events fire in
the order they were scheduled (FIFO tie-break).
"""

from __future__ import annotations

import heapq
from enum import Enum
from typing import Callable, NamedTuple, Optional

US_PER_S = 1_000_000

# Simulation timestamp in integer microseconds.
SimTime = int


def us_from_s(seconds: float) -> SimTime:
    """Convert seconds to integer microseconds (round half away handled by round())."""
    return int(round(seconds * US_PER_S))


def s_from_us(t: SimTime) -> float:
    return t / US_PER_S


class SimulationError(Exception):
    """Internal model violation (scheduling into the past, double release, bad state)."""


class EventKind(str, Enum):
    JOB_SUBMIT = "job-submit"
    SCHEDULER_CYCLE = "scheduler-cycle"
    SCHED_ATTEMPT = "sched-attempt"
    DISPATCH_ARRIVAL = "dispatch-arrival"
    LAUNCHER_READY = "launcher-ready"
    PROC_FORKED = "proc-forked"
    FS_ENQUEUE = "fs-enqueue"
    FS_REQUEST_DONE = "fs-request-done"
    TASK_COMPLETE = "task-complete"
    RESERVATION_START = "reservation-start"
    RESERVATION_END = "reservation-end"


class Event(NamedTuple):
    time: SimTime
    seq: int
    kind: EventKind
    payload: tuple

    def summary(self) -> str:
        return " ".join(str(p) for p in self.payload) if self.payload else "-"


def format_trace_line(ev: Event) -> str:
    return f"{ev.time}\t{ev.seq}\t{ev.kind.value}\t{ev.summary()}"


class Engine:
    """Time-ordered event queue with a single dispatch callback.

    The handler is called once per event; it may schedule further events at
    times >= the current clock. Determinism rests on the (time, seq) order,
    so handlers must not consult anything outside engine state and seeded
    inputs.
    """

    def __init__(self, handler: Optional[Callable[[Event], None]] = None):
        self.handler = handler
        self.trace_fn: Optional[Callable[[Event], None]] = None
        self._heap: list[Event] = []
        self._now: SimTime = 0
        self._seq = 0
        self._running = False
        self.scheduled_count = 0
        self.processed_count = 0

    @property
    def now(self) -> SimTime:
        return self._now

    def schedule(self, time: SimTime, kind: EventKind, payload: tuple = ()) -> int:
        """Queue an event; returns its seq. Scheduling into the past is an error."""
        if time < self._now:
            raise SimulationError(
                f"cannot schedule {kind.value} at t={time}us, clock is {self._now}us"
            )
        self._seq += 1
        heapq.heappush(self._heap, Event(time, self._seq, kind, payload))
        self.scheduled_count += 1
        return self._seq

    def run(self, horizon: Optional[SimTime] = None) -> SimTime:
        """Process events in (time, seq) order until the queue empties.

        With a horizon, events after it stay queued and the clock is left at
        the horizon. Without one, the clock ends at the last processed event.
        """
        if self._running:
            raise SimulationError("engine is already running")
        self._running = True
        try:
            heap = self._heap
            while heap and (horizon is None or heap[0].time <= horizon):
                ev = heapq.heappop(heap)
                self._now = ev.time
                self.processed_count += 1
                if self.trace_fn is not None:
                    self.trace_fn(ev)
                if self.handler is not None:
                    self.handler(ev)
            if horizon is not None:
                self._now = max(self._now, horizon)
            return self._now
        finally:
            self._running = False
