from __future__ import annotations

import itertools
from typing import Any, Callable

from .clock import DriftingClock
from .engine import EventHandle, Simulator


class Node:
    """A simulated device: a name, a clock, and access to the event loop."""

    def __init__(self, name: str, sim: Simulator, clock: DriftingClock):
        self.name = name
        self.sim = sim
        self.clock = clock
        self._timers: dict[int, tuple[int, Callable[..., Any], tuple, EventHandle]] = {}
        self._timer_ids = itertools.count()
        clock.listeners.append(self._on_clock_step)

    def local_now(self) -> int:
        return self.clock.local_now(self.sim.now)

    def timestamp(self) -> int:
        return self.clock.timestamp(self.sim.now)

    def at_local(self, local: int, fn: Callable[..., Any], *args: Any) -> None:
        """Run ``fn`` when this node's clock reads ``local``.

        Pending timers follow step corrections in both directions.
        """
        self._arm(next(self._timer_ids), local, fn, args)

    def _arm(self, tid: int, local: int, fn, args: tuple) -> None:
        t = max(self.clock.global_at(local), self.sim.now)
        handle = self.sim.schedule(t, self._fire_local, tid, target=self.name)
        self._timers[tid] = (local, fn, args, handle)

    def _fire_local(self, tid: int) -> None:
        local, fn, args, _ = self._timers.pop(tid)
        fn(*args)

    def _on_clock_step(self) -> None:
        for tid, (local, fn, args, handle) in list(self._timers.items()):
            handle.cancel()
            self._arm(tid, local, fn, args)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"
