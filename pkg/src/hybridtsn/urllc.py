"""5G URLLC sub-network: numerology, slot grid, reservations, DCCH, contention."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .engine import NS_PER_MS, RandomStream, Simulator

SPEED_OF_LIGHT = 2.99792458e8  # m/s
SYMBOLS_PER_SLOT = 14


class AdmissionError(ValueError):
    """A reservation or schedule request cannot be satisfied."""


@dataclass(frozen=True)
class Numerology:
    mu: int

    def __post_init__(self) -> None:
        if not 0 <= self.mu <= 4:
            raise ValueError(f"numerology mu={self.mu} outside [0, 4]")

    @property
    def slot_duration(self) -> int:
        return slot_duration(self.mu)

    @property
    def slots_per_subframe(self) -> int:
        return 2 ** self.mu


def slot_duration(mu: int) -> int:
    """Slot length in ns: 1 ms / 2**mu."""
    if not 0 <= mu <= 4:
        raise ValueError(f"numerology mu={mu} outside [0, 4]")
    return NS_PER_MS >> mu


def propagation_delay(distance_m: float) -> int:
    """Line-of-sight free-space delay in ns."""
    if distance_m < 0:
        raise ValueError("distance must be non-negative")
    return round(distance_m / SPEED_OF_LIGHT * 1e9)


def period_in_slots(period_ns, slot_ns: int) -> int:
    """Nominal grant spacing: the period rounded up to whole slots."""
    return math.ceil(Fraction(period_ns) / slot_ns)


@dataclass(frozen=True)
class CellConfig:
    bandwidth_hz: float = 200e6
    bwp_numerology: int = 4
    dcch_latency: Optional[int] = None  # defaults to one slot

    @property
    def slot(self) -> int:
        return slot_duration(self.bwp_numerology)

    @property
    def dcch_latency_ns(self) -> int:
        return self.slot if self.dcch_latency is None else self.dcch_latency


@dataclass
class RadioChannel:
    """Rural line-of-sight link between one UE and its gNB."""

    distance_m: float

    @property
    def delay(self) -> int:
        return propagation_delay(self.distance_m)


@dataclass(frozen=True)
class UplinkReservation:
    """Periodic grant for one UE.

    The traffic period is generally not a whole number of slots (60 Hz on
    62.5 us slots is 266.67 slots), so grants are laid out over a hyperperiod
    holding ``grants_per_hyperperiod`` traffic periods: grant ``k`` starts at
    ``ceil(floor(k * period) / slot) + slot_offset``.  ``period_slots`` is the
    nominal spacing, ``ceil(period / slot)``.
    """

    ue_id: str
    period: Fraction
    slot: int
    slot_offset: int
    repetition: int = 1

    @property
    def period_slots(self) -> int:
        return period_in_slots(self.period, self.slot)

    @property
    def hyperperiod_slots(self) -> int:
        return (self.period / self.slot).numerator

    @property
    def grants_per_hyperperiod(self) -> int:
        return (self.period / self.slot).denominator

    def boundary(self, k: int) -> int:
        """Start of traffic period ``k`` in local ns."""
        return (k * self.period.numerator) // self.period.denominator

    def grant_slot(self, k: int) -> int:
        """Absolute slot index of the grant serving traffic period ``k``."""
        return -(-self.boundary(k) // self.slot) + self.slot_offset

    def grant_start(self, k: int) -> int:
        return self.grant_slot(k) * self.slot

    def occupied(self) -> set[int]:
        """Slots used within one hyperperiod."""
        hp = self.hyperperiod_slots
        base = [-(-self.boundary(k) // self.slot) for k in range(self.grants_per_hyperperiod)]
        return {(b + self.slot_offset + r) % hp for b in base for r in range(self.repetition)}

    def max_residue(self) -> int:
        """Largest gap between a period boundary and its grant, ns."""
        return max(self.grant_start(k) - self.boundary(k)
                   for k in range(self.grants_per_hyperperiod))


class SlotGrid:
    """Per-cell uplink slot occupancy under one numerology."""

    def __init__(self, mu: int = 4):
        self.numerology = Numerology(mu)
        self.slot = self.numerology.slot_duration
        self.reservations: dict[str, UplinkReservation] = {}
        self.hyperperiod: Optional[int] = None
        self._owner: dict[int, str] = {}

    def reserve_uplink(self, ue_id: str, period, preferred_offset: int = 0,
                       repetition: int = 1) -> UplinkReservation:
        return reserve_uplink(self, ue_id, period, preferred_offset, repetition)

    def slot_owner(self, slot_index: int) -> Optional[str]:
        if self.hyperperiod is None:
            return None
        return self._owner.get(slot_index % self.hyperperiod)


def reserve_uplink(grid: SlotGrid, ue_id: str, period, preferred_offset: int = 0,
                   repetition: int = 1) -> UplinkReservation:
    """First-fit periodic reservation starting at ``preferred_offset``."""
    period = Fraction(period)
    if ue_id in grid.reservations:
        raise AdmissionError(f"{ue_id} already holds a reservation")
    hp = UplinkReservation(ue_id, period, grid.slot, 0, repetition).hyperperiod_slots
    if grid.hyperperiod is not None and grid.hyperperiod != hp:
        raise AdmissionError(
            f"{ue_id}: hyperperiod {hp} slots differs from the cell's {grid.hyperperiod}")
    for offset in range(preferred_offset, preferred_offset + hp):
        res = UplinkReservation(ue_id, period, grid.slot, offset, repetition)
        slots = res.occupied()
        if not slots & grid._owner.keys():
            grid.hyperperiod = hp
            grid.reservations[ue_id] = res
            for s in slots:
                grid._owner[s] = ue_id
            return res
    raise AdmissionError(f"uplink grid saturated: no free pattern for {ue_id}")


class DcchChannel:
    """Dedicated control channel between a gNB and one UE.

    Delivery is ``send + processing latency + propagation``; per direction the
    channel is FIFO, and an optional loss probability drops messages.
    """

    def __init__(self, sim: Simulator, latency: int, propagation: int,
                 loss: float = 0.0, stream: Optional[RandomStream] = None):
        self.sim = sim
        self.latency = latency
        self.propagation = propagation
        self.loss = loss
        self.stream = stream
        self._last_delivery: dict[str, int] = {}
        self.counters: Counter = Counter()

    def deliver(self, direction: str, msg, handler: Callable) -> Optional[int]:
        if self.loss > 0 and self.stream is not None and self.stream.random() < self.loss:
            self.counters["lost"] += 1
            return None
        at = self.sim.now + self.latency + self.propagation
        at = max(at, self._last_delivery.get(direction, 0))
        self._last_delivery[direction] = at
        self.sim.schedule(at, handler, msg, target=msg.dst)
        self.counters["delivered"] += 1
        return at


@dataclass
class Transmission:
    ue_id: str
    start: int
    end: int
    payload: object
    collided: bool = False


class CellReceiver:
    """gNB-side uplink reception with overlap-based collision detection.

    Two transmissions collide when their reception intervals overlap by more
    than ``tolerance`` ns (one OFDM symbol by default, absorbed by the cyclic
    prefix and the symbol guard).
    """

    def __init__(self, sim: Simulator, slot: int, tolerance: Optional[int] = None,
                 on_success: Optional[Callable] = None,
                 on_collision: Optional[Callable] = None):
        self.sim = sim
        self.slot = slot
        self.tolerance = slot // SYMBOLS_PER_SLOT if tolerance is None else tolerance
        self.on_success = on_success
        self.on_collision = on_collision
        self.active: list[Transmission] = []
        self.collisions = 0
        self.received = 0

    def begin(self, tx: Transmission) -> None:
        self.active = [a for a in self.active if a.end > self.sim.now]
        for other in self.active:
            overlap = min(other.end, tx.end) - max(other.start, tx.start)
            if overlap > self.tolerance:
                if not other.collided:
                    other.collided = True
                    self.collisions += 1
                if not tx.collided:
                    tx.collided = True
                    self.collisions += 1
        self.active.append(tx)
        self.sim.schedule(tx.end, self._end, tx, target="cell")

    def _end(self, tx: Transmission) -> None:
        if tx.collided:
            if self.on_collision is not None:
                self.on_collision(tx)
        else:
            self.received += 1
            if self.on_success is not None:
                self.on_success(tx)
