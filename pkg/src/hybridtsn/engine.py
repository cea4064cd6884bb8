"""Deterministic discrete-event core.

Time is an integer count of nanoseconds since simulation start.  Events with
equal fire times dispatch in the order they were scheduled.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current simulation time."""


@dataclass(order=True)
class Event:
    fire_at: int
    sequence: int
    target: str = field(compare=False, default="")
    payload: Any = field(compare=False, default=None)
    callback: Optional[Callable[..., Any]] = field(compare=False, default=None, repr=False)
    cancelled: bool = field(compare=False, default=False)


class EventHandle:
    """Returned by :meth:`Simulator.schedule`; lets the caller cancel the event."""

    __slots__ = ("_event",)

    def __init__(self, event: Event):
        self._event = event

    @property
    def fire_at(self) -> int:
        return self._event.fire_at

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled

    def cancel(self) -> None:
        self._event.cancelled = True


class Simulator:
    """Single-threaded event loop over a binary heap."""

    def __init__(self) -> None:
        self.now = 0
        # (fire_at, sequence, event) tuples compare faster than dataclasses
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = itertools.count()
        self.dispatched = 0

    def schedule(self, fire_at: int, callback: Callable[..., Any], *args: Any,
                 target: str = "") -> EventHandle:
        fire_at = int(fire_at)
        if fire_at < self.now:
            raise SchedulingError(
                f"event for {target or callback!r} at {fire_at} ns is before now={self.now} ns")
        seq = next(self._seq)
        ev = Event(fire_at, seq, target, args, callback)
        heapq.heappush(self._heap, (fire_at, seq, ev))
        return EventHandle(ev)

    def schedule_in(self, delay: int, callback: Callable[..., Any], *args: Any,
                    target: str = "") -> EventHandle:
        return self.schedule(self.now + delay, callback, *args, target=target)

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with ``fire_at <= t_end``; return how many ran."""
        t_end = int(t_end)
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before now={self.now}")
        heap = self._heap
        count = 0
        while heap and heap[0][0] <= t_end:
            ev = heapq.heappop(heap)[2]
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            ev.callback(*ev.payload)
            count += 1
        self.now = t_end
        self.dispatched += count
        return count


class RandomStream:
    """A named random stream derived from ``(seed, stream_id)``.

    Streams are independent of each other, so adding a node (and therefore a
    new stream) leaves every other node's draws unchanged.
    """

    def __init__(self, seed: int, stream_id: str):
        self.stream_id = stream_id
        self.seed = seed
        # str seeds go through sha512 in CPython, independent of PYTHONHASHSEED
        self._rng = random.Random(f"{seed}/{stream_id}")

    def uniform(self, lo: float, hi: float) -> float:
        return rng_uniform(self, lo, hi)

    def random(self) -> float:
        return self._rng.random()

    def randrange(self, n: int) -> int:
        return self._rng.randrange(n)

    def expovariate(self, rate: float) -> float:
        return self._rng.expovariate(rate)

    def shuffle(self, items: list) -> None:
        self._rng.shuffle(items)


def rng_uniform(stream: RandomStream, lo: float, hi: float) -> float:
    """Draw from ``[lo, hi)`` on ``stream``; ``lo == hi`` returns ``lo``."""
    if lo > hi:
        raise ValueError(f"empty interval: lo={lo} > hi={hi}")
    u = stream._rng.random()
    if lo == hi:
        return lo
    v = lo + (hi - lo) * u
    # guard the rounding corner where lo + (hi-lo)*u lands exactly on hi
    return v if v < hi else lo


class RandomStreams:
    """Factory that hands out one :class:`RandomStream` per label."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, RandomStream] = {}

    def get(self, stream_id: str) -> RandomStream:
        s = self._streams.get(stream_id)
        if s is None:
            s = self._streams[stream_id] = RandomStream(self.seed, stream_id)
        return s
