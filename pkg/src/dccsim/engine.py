"""Deterministic discrete-event core.

Integer-nanosecond virtual clock, an ordered event queue with insertion-order
tie-breaking, repeating timers, and named PRNG sub-streams derived from a
single scenario seed. Everything else in the simulator hangs off one
EventLoop instance; a loop is single-threaded and self-contained, so
independent scenario runs can execute in parallel processes.
"""

import heapq
import random

US = 1_000
MS = 1_000_000
SEC = 1_000_000_000


def ns_from_s(seconds: float) -> int:
    """Convert seconds (possibly float config input) to integer nanoseconds."""
    return int(round(seconds * SEC))


def ns_from_us(us: float) -> int:
    return int(round(us * US))


def ns_from_ms(ms: float) -> int:
    return int(round(ms * MS))


class SchedulingError(Exception):
    """An event was scheduled before the current clock (implementation bug)."""


class EventLoop:
    """Single-threaded event loop over an integer-nanosecond clock.

    Events at the same instant run in insertion order. schedule() returns a
    handle that cancel() marks dead; dead events are skipped unprocessed.
    The clock never moves backwards.
    """

    __slots__ = ("now", "seed", "events_processed", "trace", "_heap", "_seq", "_rngs")

    def __init__(self, seed: int = 0):
        self.now = 0
        self.seed = seed
        self.events_processed = 0
        self.trace = None  # optional list collecting (t, seq, label) tuples
        self._heap = []
        self._seq = 0
        self._rngs = {}

    def schedule(self, at: int, fn, arg=None):
        """Enqueue fn(arg) to run at absolute time `at`. Returns a handle."""
        if at < self.now:
            raise SchedulingError(
                f"event scheduled at t={at} ns, before current clock t={self.now} ns"
            )
        self._seq += 1
        ev = [at, self._seq, fn, arg]
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay: int, fn, arg=None):
        return self.schedule(self.now + delay, fn, arg)

    @staticmethod
    def cancel(handle):
        """Mark a scheduled event dead; it will be skipped when popped."""
        handle[2] = None

    def rng(self, name: str) -> random.Random:
        """Named PRNG sub-stream; stable for a given (seed, name) pair."""
        r = self._rngs.get(name)
        if r is None:
            r = self._rngs[name] = random.Random(f"{self.seed}:{name}")
        return r

    def run_until(self, t_end: int) -> int:
        """Process every event with fire time <= t_end; leave clock at t_end."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before current clock {self.now}")
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= t_end:
            ev = pop(heap)
            fn = ev[2]
            if fn is None:
                continue
            self.now = ev[0]
            if self.trace is not None:
                self.trace.append((ev[0], ev[1], getattr(fn, "__qualname__", repr(fn))))
            fn(ev[3])
            n += 1
        self.now = t_end
        self.events_processed += n
        return n


class Periodic:
    """Repeating timer: calls fn() every `interval` ns.

    First firing is at now + interval unless `first_at` is given. Firing
    times step by exact integer intervals, so a 500 us timer over 1 s fires
    exactly 2000 times.
    """

    __slots__ = ("loop", "interval", "fn", "next_at", "stopped", "_ev")

    def __init__(self, loop: EventLoop, interval: int, fn, first_at: int | None = None):
        self.loop = loop
        self.interval = interval
        self.fn = fn
        self.stopped = False
        self.next_at = loop.now + interval if first_at is None else first_at
        self._ev = loop.schedule(self.next_at, self._fire)

    def _fire(self, _):
        if self.stopped:
            return
        self.fn()
        self.next_at += self.interval
        self._ev = self.loop.schedule(self.next_at, self._fire)

    def stop(self):
        self.stopped = True
        if self._ev is not None:
            EventLoop.cancel(self._ev)
            self._ev = None
