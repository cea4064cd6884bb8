"""Synchrophasor application layer: PMUs, the gNB gateway, the PDC sink,
and best-effort cross traffic from other Ethernet clients."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .engine import NS_PER_S, RandomStream
from .node import Node
from .tte import IPV4_ETHERTYPE, TT_ETHERTYPE, EthFrame, TteEndpoint, VirtualLink
from .urllc import CellReceiver, Transmission, UplinkReservation

FRAME_RATE_HZ = 60
FRAME_PERIOD = Fraction(NS_PER_S, FRAME_RATE_HZ)
PAYLOAD_BYTES = 100
# UDP (8) + IPv4 (20) + Ethernet header and FCS (18)
OVERHEAD_BYTES = 46


@dataclass
class SynchrophasorFrame:
    pmu_id: str
    frame_seq: int
    measurement_timestamp: int
    created_global: int
    payload_bytes: int = PAYLOAD_BYTES
    # lifecycle, global ns
    first_launch: Optional[int] = None
    launch: Optional[int] = None
    propagation: int = 0
    air_time: int = 0
    attempts: int = 0
    gnb_arrival: Optional[int] = None
    gnb_dispatch: Optional[int] = None

    @property
    def wire_bytes(self) -> int:
        return self.payload_bytes + OVERHEAD_BYTES


@dataclass(frozen=True)
class FrameRecord:
    pmu_id: str
    seq: int
    created_ns: int
    received_ns: int
    received_local_ns: int
    slot_wait_ns: int
    contention_ns: int
    air_ns: int
    propagation_ns: int
    gateway_wait_ns: int
    backbone_ns: int

    @property
    def latency_ns(self) -> int:
        return self.received_ns - self.created_ns

    def stage_sum(self) -> int:
        return (self.slot_wait_ns + self.contention_ns + self.air_ns + self.propagation_ns
                + self.gateway_wait_ns + self.backbone_ns)


@dataclass(frozen=True)
class GatewayBinding:
    gnb_id: str
    vl_id: int
    tt_ethertype: int = TT_ETHERTYPE


class Pmu(Node):
    """A PMU acting as a URLLC UE.

    Frames are produced on the PMU's own 60 Hz boundaries and launched in the
    reserved uplink slot, early by the measured propagation delay (timing
    advance).  Collided transmissions retry ``1 + stagger`` slots after the
    failed one ends.
    """

    def __init__(self, name, sim, clock, *, reservation: UplinkReservation,
                 propagation: int, timing_advance: int, cell: CellReceiver,
                 stagger_slots: int, max_retransmissions: Optional[int],
                 counters: Counter, stop_at: int, frame_period: Fraction = FRAME_PERIOD,
                 payload_bytes: int = PAYLOAD_BYTES):
        super().__init__(name, sim, clock)
        self.reservation = reservation
        self.propagation = propagation
        self.timing_advance = timing_advance
        self.cell = cell
        self.slot = reservation.slot
        self.stagger_slots = stagger_slots
        self.max_retransmissions = max_retransmissions
        self.counters = counters
        self.stop_at = stop_at
        self.frame_period = frame_period
        self.payload_bytes = payload_bytes
        self.generated: list[SynchrophasorFrame] = []

    def boundary(self, k: int) -> int:
        return (k * self.frame_period.numerator) // self.frame_period.denominator

    def start(self, first_k: int = 1) -> None:
        self.at_local(self.boundary(first_k), self._on_boundary, first_k)

    def _on_boundary(self, k: int) -> None:
        if self.sim.now >= self.stop_at:
            return
        self.pmu_generate(k)
        self.at_local(self.boundary(k + 1), self._on_boundary, k + 1)

    def pmu_generate(self, k: int) -> SynchrophasorFrame:
        frame = SynchrophasorFrame(self.name, k, self.timestamp(), self.sim.now,
                                   self.payload_bytes)
        self.generated.append(frame)
        self.counters["generated"] += 1
        launch_local = self.reservation.grant_start(k) - self.timing_advance
        self.at_local(max(launch_local, self.local_now()), self.ue_transmit, frame)
        return frame

    def ue_transmit(self, frame: SynchrophasorFrame) -> Transmission:
        now = self.sim.now
        if frame.first_launch is None:
            frame.first_launch = now
        frame.launch = now
        frame.attempts += 1
        frame.propagation = self.propagation
        frame.air_time = self.slot
        start = now + self.propagation
        tx = Transmission(self.name, start, start + self.slot, frame)
        self.sim.schedule(start, self.cell.begin, tx, target="cell")
        return tx

    def on_collision(self, tx: Transmission) -> None:
        frame: SynchrophasorFrame = tx.payload
        if (self.max_retransmissions is not None
                and frame.attempts > self.max_retransmissions):
            self.counters["air_retry_exhausted"] += 1
            return
        retry_local = (self.clock.local_now(frame.launch)
                       + (2 + self.stagger_slots) * self.slot)
        self.at_local(max(retry_local, self.local_now()), self.ue_transmit, frame)


class Gnb(TteEndpoint):
    """Base station and TTE/Ethernet gateway.

    ``gateway_mode`` is ``"tt"`` (re-time onto the PMU's virtual link) or
    ``"be"`` (forward immediately as best-effort).
    """

    def __init__(self, name, sim, clock, counters, *, pdc: str, gateway_mode: str):
        super().__init__(name, sim, clock, counters)
        self.pdc = pdc
        self.gateway_mode = gateway_mode
        self.bindings: dict[str, GatewayBinding] = {}
        self.pmus: dict[str, Pmu] = {}
        self._next_cycle: dict[int, int] = {}
        self.gateway_waits: list[int] = []

    def on_uplink(self, tx: Transmission) -> None:
        frame: SynchrophasorFrame = tx.payload
        frame.gnb_arrival = self.sim.now
        self.gnb_gateway_convert(frame)

    def on_collision(self, tx: Transmission) -> None:
        self.pmus[tx.ue_id].on_collision(tx)

    def gnb_gateway_convert(self, frame: SynchrophasorFrame) -> Optional[EthFrame]:
        if self.gateway_mode == "be":
            eth = EthFrame(IPV4_ETHERTYPE, self.name, self.pdc, frame.wire_bytes, payload=frame)
            frame.gnb_dispatch = self.sim.now
            self.send_be(eth)
            return eth
        binding = self.bindings.get(frame.pmu_id)
        vl = self.vl_table.get(binding.vl_id) if binding else None
        if vl is None:
            self.counters["gateway_no_binding"] += 1
            return None
        k = max(vl.next_cycle(self.local_now()), self._next_cycle.get(vl.vl_id, 0))
        self._next_cycle[vl.vl_id] = k + 1
        eth = EthFrame(binding.tt_ethertype, self.name, self.pdc, frame.wire_bytes,
                       vl_id=vl.vl_id, cycle=k, payload=frame)
        hop = vl.hops[0]
        self.at_local(vl.window_start(k, hop), self._dispatch_tt, eth, hop.next_node)
        return eth

    def _dispatch_tt(self, eth: EthFrame, next_node: str) -> None:
        frame: SynchrophasorFrame = eth.payload
        frame.gnb_dispatch = self.sim.now
        self.gateway_waits.append(frame.gnb_dispatch - frame.gnb_arrival)
        self.ports[next_node].send_tt(eth)

    def receive(self, frame: EthFrame, from_node: str) -> None:
        self.counters["gnb_unexpected_frame"] += 1


class Pdc(TteEndpoint):
    """Phasor data concentrator: logs every synchrophasor frame it receives."""

    def __init__(self, name, sim, clock, counters):
        super().__init__(name, sim, clock, counters)
        self.log: list[FrameRecord] = []
        self._seen: set[tuple[str, int]] = set()
        self.cross_traffic_received = 0

    def receive(self, frame: EthFrame, from_node: str) -> None:
        if isinstance(frame.payload, SynchrophasorFrame):
            self.pdc_receive(frame.payload)
        else:
            self.cross_traffic_received += 1

    def pdc_receive(self, frame: SynchrophasorFrame) -> Optional[FrameRecord]:
        key = (frame.pmu_id, frame.frame_seq)
        if key in self._seen:
            self.counters["pdc_duplicate"] += 1
            return None
        self._seen.add(key)
        now = self.sim.now
        rec = FrameRecord(
            pmu_id=frame.pmu_id,
            seq=frame.frame_seq,
            created_ns=frame.created_global,
            received_ns=now,
            received_local_ns=self.timestamp(),
            slot_wait_ns=frame.first_launch - frame.created_global,
            contention_ns=frame.launch - frame.first_launch,
            air_ns=frame.air_time,
            propagation_ns=frame.propagation,
            gateway_wait_ns=frame.gnb_dispatch - frame.gnb_arrival,
            backbone_ns=now - frame.gnb_dispatch,
        )
        self.log.append(rec)
        return rec


class CrossTrafficSource(TteEndpoint):
    """Ethernet client emitting Poisson best-effort frames toward ``dst``."""

    def __init__(self, name, sim, clock, counters, *, dst: str, load: float,
                 stream: RandomStream, stop_at: int, min_bytes: int = 64,
                 max_bytes: int = 1518, rate_bps: int = 100_000_000):
        super().__init__(name, sim, clock, counters)
        self.dst = dst
        self.load = load
        self.stream = stream
        self.stop_at = stop_at
        self.min_bytes = min_bytes
        self.max_bytes = max_bytes
        mean_bits = 8 * (min_bytes + max_bytes) / 2
        self.rate = load * rate_bps / mean_bits / NS_PER_S  # frames per ns
        self.sent = 0

    def start(self) -> None:
        if self.load > 0:
            self._schedule_next()

    def _schedule_next(self) -> None:
        gap = max(1, round(self.stream.expovariate(self.rate)))
        if self.sim.now + gap < self.stop_at:
            self.sim.schedule(self.sim.now + gap, self._emit, target=self.name)

    def _emit(self) -> None:
        size = self.min_bytes + self.stream.randrange(self.max_bytes - self.min_bytes + 1)
        self.send_be(EthFrame(IPV4_ETHERTYPE, self.name, self.dst, size))
        self.sent += 1
        self._schedule_next()

    def receive(self, frame: EthFrame, from_node: str) -> None:
        pass
