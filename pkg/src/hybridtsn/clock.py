"""Free-running drifting clocks with step correction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .engine import RandomStream


@dataclass
class DriftingClock:
    """Maps global simulation time (ns) onto a node's local timescale.

    ``local = origin_local + floor((1 + drift_rho) * (t - origin_global)) + correction``
    """

    drift_rho: float = 0.0
    origin_global: int = 0
    origin_local: int = 0
    correction: int = 0
    quantum: int = 8
    # called after every step correction, e.g. to re-arm local timers
    listeners: list[Callable[[], None]] = field(default_factory=list, repr=False,
                                                compare=False)

    def __post_init__(self) -> None:
        if self.quantum < 1:
            raise ValueError("timestamp quantum must be >= 1 ns")

    def local_now(self, t: int) -> int:
        elapsed = t - self.origin_global
        if elapsed < 0:
            raise ValueError(f"t={t} precedes clock origin {self.origin_global}")
        return self.origin_local + elapsed + math.floor(self.drift_rho * elapsed) + self.correction

    def timestamp(self, t: int) -> int:
        """Local time floored to the timestamp quantum."""
        local = self.local_now(t)
        return local - local % self.quantum

    def apply_correction(self, measured_offset: int) -> None:
        self.correction -= int(measured_offset)
        for fn in self.listeners:
            fn()

    def global_at(self, local: int) -> int:
        """Earliest global time at which ``local_now`` reaches ``local``."""
        target = local - self.origin_local - self.correction
        if target <= 0:
            return self.origin_global
        guess = max(0, math.floor(target / (1.0 + self.drift_rho)) - 2)
        t = self.origin_global + guess
        while self.local_now(t) < local:
            t += 1
        while t > self.origin_global and self.local_now(t - 1) >= local:
            t -= 1
        return t


def draw_drift(stream: RandomStream, bound_ppm: float, distribution: str = "uniform") -> float:
    """Draw a constant drift rate within ``+-bound_ppm``.

    ``uniform`` samples the whole interval; ``extremes`` picks one of the two
    bounds, which is the worst case for offset growth.
    """
    bound = bound_ppm * 1e-6
    if distribution == "uniform":
        return stream.uniform(-bound, bound)
    if distribution == "extremes":
        return bound if stream.random() < 0.5 else -bound
    raise ValueError(f"unknown drift distribution {distribution!r}")
