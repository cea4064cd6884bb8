"""Time-Triggered Ethernet backbone.

Covers PCF-based clock synchronization (compression master, synchronization
masters and clients), virtual-link scheduling with admission checks, and
the switch data plane: scheduled TT forwarding plus FIFO best-effort queues
that yield to TT windows.
"""

from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .node import Node
from .urllc import AdmissionError

TT_ETHERTYPE = 0x88D7
IPV4_ETHERTYPE = 0x0800
PCF_BYTES = 64
LINK_RATE_BPS = 100_000_000
LINK_PROPAGATION_NS = 100


class TteRole(str, enum.Enum):
    COMPRESSION_MASTER = "CM"
    SYNCHRONIZATION_MASTER = "SM"
    SYNCHRONIZATION_CLIENT = "SC"


def serialization_ns(nbytes: int, rate_bps: int = LINK_RATE_BPS) -> int:
    return -(-nbytes * 8 * 1_000_000_000 // rate_bps)


@dataclass(frozen=True)
class TteLink:
    endpoints: tuple[str, str]
    rate_bps: int = LINK_RATE_BPS
    propagation_ns: int = LINK_PROPAGATION_NS

    def hop_delay(self, nbytes: int) -> int:
        return serialization_ns(nbytes, self.rate_bps) + self.propagation_ns


@dataclass
class PcfFrame:
    cycle_index: int
    sender: str
    kind: str = "integration"
    perceived_offset: Optional[int] = None
    # compressed PCFs carry the CM's post-correction dispatch time and, for
    # each SM that took part, the step it must apply
    dispatch_local: Optional[int] = None
    corrections: Optional[dict[str, int]] = None


@dataclass(frozen=True)
class Hop:
    node: str
    next_node: str
    dispatch_offset: int


@dataclass
class VirtualLink:
    """A pre-scheduled TT flow: a routing tree rooted at ``sender``.

    Each hop dispatches once per ``period`` at ``floor(k * period) + offset``
    on the forwarding node's local clock.
    """

    vl_id: int
    sender: str
    receivers: list[str]
    hops: list[Hop]
    period: Fraction
    window_length: int
    frame_bytes: int

    @property
    def dispatch_offset(self) -> int:
        return self.hops[0].dispatch_offset

    @property
    def route(self) -> list[tuple[str, str]]:
        return [(h.node, h.next_node) for h in self.hops]

    def __post_init__(self) -> None:
        self.period = Fraction(self.period)
        self._num, self._den = self.period.numerator, self.period.denominator

    def cycle_floor(self, local: int, offset: int) -> int:
        """``floor((local - offset) / period)`` in integer arithmetic."""
        return ((local - offset) * self._den) // self._num

    def window_start(self, k: int, hop: Hop) -> int:
        return (k * self._num) // self._den + hop.dispatch_offset

    def hops_from(self, node: str) -> list[Hop]:
        return [h for h in self.hops if h.node == node]

    def hop_into(self, node: str) -> Optional[Hop]:
        for h in self.hops:
            if h.next_node == node:
                return h
        return None

    def next_cycle(self, local: int) -> int:
        """First cycle whose sender window starts at or after ``local``."""
        first = self.hops[0]
        k = max(0, self.cycle_floor(local, first.dispatch_offset))
        while self.window_start(k, first) < local:
            k += 1
        return k

    def is_tree(self) -> bool:
        parents: dict[str, str] = {}
        for h in self.hops:
            if h.next_node in parents or h.next_node == self.sender:
                return False
            parents[h.next_node] = h.node
        for h in self.hops:
            if h.node != self.sender and h.node not in parents:
                return False
        return all(r in parents for r in self.receivers)


def _hyperperiod(periods: Iterable[Fraction]) -> Fraction:
    nums, dens = [], []
    for p in periods:
        nums.append(p.numerator)
        dens.append(p.denominator)
    return Fraction(math.lcm(*nums), math.gcd(*dens))


def port_windows(vls: Iterable[VirtualLink]) -> dict[tuple[str, str], list[tuple[VirtualLink, Hop]]]:
    ports: dict[tuple[str, str], list[tuple[VirtualLink, Hop]]] = {}
    for vl in vls:
        for h in vl.hops:
            ports.setdefault((h.node, h.next_node), []).append((vl, h))
    return ports


def check_admission(vls: list[VirtualLink]) -> None:
    """Raise :class:`AdmissionError` if any egress port has overlapping windows."""
    for vl in vls:
        if not vl.is_tree():
            raise AdmissionError(f"VL {vl.vl_id}: route is not a tree rooted at {vl.sender}")
        for h in vl.hops:
            if not 0 <= h.dispatch_offset or h.dispatch_offset + vl.window_length > vl.period:
                raise AdmissionError(
                    f"VL {vl.vl_id}: window at {h.node}->{h.next_node} leaves its period")
    for port, entries in port_windows(vls).items():
        if len(entries) < 2:
            continue
        hyper = _hyperperiod(vl.period for vl, _ in entries)
        intervals = []
        for vl, h in entries:
            n = int(hyper / vl.period)
            for k in range(n):
                start = vl.window_start(k, h)
                intervals.append((start, start + vl.window_length, vl.vl_id))
        hp = math.floor(hyper)
        wrapped = [(s - hp, e - hp, v) for s, e, v in intervals if e > hp]
        intervals.sort()
        allw = sorted(intervals + wrapped)
        for (s1, e1, v1), (s2, e2, v2) in zip(allw, allw[1:]):
            if s2 < e1 and v1 != v2:
                raise AdmissionError(
                    f"TT windows of VL {v1} and VL {v2} overlap on port {port[0]}->{port[1]}")


@dataclass
class VlRequest:
    vl_id: int
    sender: str
    receivers: list[str]
    path: list[str]  # node sequence sender -> ... -> receiver
    earliest_offset: int
    frame_bytes: int


def plan_virtual_links(requests: list[VlRequest], period: Fraction, guard: int,
                       links: dict[tuple[str, str], TteLink]) -> list[VirtualLink]:
    """Deterministic first-fit assignment of dispatch offsets.

    Hop ``h+1`` may dispatch no earlier than ``guard`` after the scheduled
    arrival from hop ``h``, so a frame from a sender whose clock lags by up to
    ``guard`` still reaches the switch before its dispatch instant.
    """
    period = Fraction(period)
    busy: dict[tuple[str, str], list[tuple[int, int]]] = {}
    vls = []
    for req in requests:
        ser = serialization_ns(req.frame_bytes)
        length = ser + guard
        earliest = req.earliest_offset
        hops = []
        for a, b in zip(req.path, req.path[1:]):
            slots = busy.setdefault((a, b), [])
            start = earliest
            moved = True
            while moved:
                moved = False
                for s, e in slots:
                    if start < e and s < start + length:
                        start = e
                        moved = True
            if start + length > period:
                raise AdmissionError(
                    f"VL {req.vl_id}: no TT window left on {a}->{b} within the period")
            slots.append((start, start + length))
            hops.append(Hop(a, b, start))
            earliest = start + ser + links[(a, b)].propagation_ns + guard
        vls.append(VirtualLink(req.vl_id, req.sender, list(req.receivers), hops, period,
                               length, req.frame_bytes))
    check_admission(vls)
    return vls


def cm_compress(perceived_offsets: list[int]) -> Optional[int]:
    """Fault-tolerant median; ``None`` when no PCF arrived in time."""
    if not perceived_offsets:
        return None
    xs = sorted(perceived_offsets)
    n = len(xs)
    mid = n // 2
    if n % 2:
        return xs[mid]
    return (xs[mid - 1] + xs[mid]) // 2


# --------------------------------------------------------------------------
# data plane

@dataclass
class EthFrame:
    ethertype: int
    src: str
    dst: str
    size_bytes: int
    vl_id: Optional[int] = None
    cycle: Optional[int] = None
    payload: object = None
    enqueued_at: int = 0


class EgressPort:
    """Output port toward ``peer``: TT frames at their windows, BE via FIFO.

    A best-effort frame only starts if it will finish before the next TT
    window on this port opens.
    """

    def __init__(self, owner: Node, peer: str, link: TteLink,
                 deliver: Callable[[EthFrame, str], None], counters: Counter,
                 capacity: int = 128):
        self.owner = owner
        self.peer = peer
        self.link = link
        self.deliver = deliver
        self.counters = counters
        self.capacity = capacity
        self.tt_queue: deque[EthFrame] = deque()
        self.be_queue: deque[EthFrame] = deque()
        self.busy_until = 0
        self.windows: list[tuple[VirtualLink, Hop]] = []
        self._wake_pending: Optional[int] = None
        self.be_forwarded = 0
        self.be_received = 0

    @property
    def sim(self):
        return self.owner.sim

    def idle(self) -> bool:
        return self.sim.now >= self.busy_until

    def send_tt(self, frame: EthFrame) -> None:
        if not self.idle():
            self.counters["tt_port_busy_delay"] += 1
        self.tt_queue.append(frame)
        self._service()

    def enqueue_be(self, frame: EthFrame) -> bool:
        self.be_received += 1
        if len(self.be_queue) >= self.capacity:
            self.counters["be_queue_overflow"] += 1
            if frame.payload is not None:
                self.counters["pmu_be_queue_overflow"] += 1
            return False
        frame.enqueued_at = self.sim.now
        self.be_queue.append(frame)
        self._service()
        return True

    def _blocking_window(self, ser: int) -> Optional[int]:
        """Local end of the TT window that forbids starting a BE frame now."""
        if not self.windows:
            return None
        local = self.owner.local_now()
        block_end = None
        for vl, h in self.windows:
            k = max(0, vl.cycle_floor(local, h.dispatch_offset + vl.window_length))
            while True:
                start = vl.window_start(k, h)
                end = start + vl.window_length
                if end > local:
                    break
                k += 1
            if start <= local or local + ser > start:
                block_end = end if block_end is None else max(block_end, end)
        return block_end

    def _service(self) -> None:
        if not self.idle():
            self._wake(self.busy_until)
            return
        if self.tt_queue:
            self._transmit(self.tt_queue.popleft())
            return
        if not self.be_queue:
            return
        ser = serialization_ns(self.be_queue[0].size_bytes, self.link.rate_bps)
        block_end = self._blocking_window(ser)
        if block_end is not None:
            self._wake(max(self.owner.clock.global_at(block_end), self.sim.now + 1))
            return
        self.be_forwarded += 1
        self._transmit(self.be_queue.popleft())

    def _wake(self, at: int) -> None:
        if self._wake_pending is not None and self._wake_pending <= at:
            return
        self._wake_pending = at
        self.sim.schedule(at, self._on_wake, at, target=self.owner.name)

    def _on_wake(self, at: int) -> None:
        if self._wake_pending == at:
            self._wake_pending = None
        self._service()

    def _transmit(self, frame: EthFrame) -> None:
        ser = serialization_ns(frame.size_bytes, self.link.rate_bps)
        now = self.sim.now
        self.busy_until = now + ser
        self.sim.schedule(now + ser + self.link.propagation_ns, self.deliver, frame,
                          self.owner.name, target=self.peer)
        if self.tt_queue or self.be_queue:
            self._wake(self.busy_until)


class TteEndpoint(Node):
    """Anything attached to the backbone: owns egress ports and a routing table."""

    def __init__(self, name, sim, clock, counters: Counter):
        super().__init__(name, sim, clock)
        self.counters = counters
        self.ports: dict[str, EgressPort] = {}
        self.routes: dict[str, str] = {}  # destination -> next hop
        self.vl_table: dict[int, VirtualLink] = {}
        self.guard = 0

    def send_be(self, frame: EthFrame) -> bool:
        nxt = self.routes.get(frame.dst)
        if nxt is None:
            self.counters["be_no_route"] += 1
            return False
        return self.ports[nxt].enqueue_be(frame)

    def receive(self, frame: EthFrame, from_node: str) -> None:
        raise NotImplementedError


class Switch(TteEndpoint):

    def receive(self, frame: EthFrame, from_node: str) -> None:
        if frame.ethertype == TT_ETHERTYPE:
            self.forward_tt_frame(frame, from_node)
        else:
            self.forward_be_frame(frame)

    def forward_tt_frame(self, frame: EthFrame, from_node: str) -> list[int]:
        """Check the acceptance window, then relay at each egress window."""
        vl = self.vl_table.get(frame.vl_id)
        if vl is None:
            self.counters["tt_unknown_vl"] += 1
            return []
        into = vl.hop_into(self.name)
        if into is None or into.node != from_node:
            self.counters["tt_unknown_vl"] += 1
            return []
        k = frame.cycle
        expected = (vl.window_start(k, into)
                    + serialization_ns(frame.size_bytes) + LINK_PROPAGATION_NS)
        arrived = self.timestamp()
        if abs(arrived - expected) > self.guard:
            self.counters["tt_window_violation"] += 1
            return []
        starts = []
        for h in vl.hops_from(self.name):
            start = vl.window_start(k, h)
            starts.append(start)
            self.at_local(start, self.ports[h.next_node].send_tt, frame)
        return starts

    def forward_be_frame(self, frame: EthFrame) -> bool:
        return self.send_be(frame)


# --------------------------------------------------------------------------
# PCF synchronization

class CompressionMaster:
    """Collects integration PCFs each cycle and broadcasts the compressed one."""

    def __init__(self, node: Node, integration_cycle: int, acceptance: int,
                 path_delay: Callable[[str, str], int]):
        self.node = node
        self.cycle = integration_cycle
        self.acceptance = acceptance
        self.path_delay = path_delay
        self.masters: dict[str, "SyncMaster"] = {}
        self.clients: dict[str, "SyncClient"] = {}
        self._collected: dict[int, dict[str, int]] = {}
        self.history: list[tuple[int, dict[str, int], Optional[int]]] = []
        self.skipped_cycles = 0
        self.late_pcfs = 0

    @property
    def window(self) -> int:
        far = max((self.path_delay(s, self.node.name) for s in self.masters), default=0)
        return far + self.acceptance

    def start(self, first_cycle: int = 1) -> None:
        self._arm(first_cycle)

    def _arm(self, k: int) -> None:
        self.node.at_local(k * self.cycle + self.window, self._compress_cycle, k)

    def on_pcf(self, pcf: PcfFrame) -> None:
        if pcf.cycle_index not in self._collected:
            # compression for this cycle already ran
            self.late_pcfs += 1
            return
        expected = pcf.cycle_index * self.cycle + self.path_delay(pcf.sender, self.node.name)
        pcf.perceived_offset = expected - self.node.timestamp()
        self._collected[pcf.cycle_index][pcf.sender] = pcf.perceived_offset

    def open_cycle(self, k: int) -> None:
        self._collected.setdefault(k, {})

    def _compress_cycle(self, k: int) -> None:
        offsets = self._collected.pop(k, {})
        self.open_cycle(k + 1)
        self._arm(k + 1)
        self.compress(k, offsets)

    def compress(self, k: int, offsets: dict[str, int]) -> Optional[int]:
        m = cm_compress(list(offsets.values()))
        self.history.append((k, dict(offsets), m))
        if m is None:
            self.skipped_cycles += 1
            return None
        self.node.clock.apply_correction(-m)
        compressed = PcfFrame(k, self.node.name, kind="compressed",
                              dispatch_local=self.node.timestamp(),
                              corrections={s: p - m for s, p in offsets.items()})
        for name, peer in list(self.masters.items()) + list(self.clients.items()):
            delay = self.path_delay(self.node.name, name)
            self.node.sim.schedule(self.node.sim.now + delay, peer.on_compressed,
                                   compressed, delay, target=name)
        return m


class SyncMaster:
    """Dispatches one PCF per integration cycle and steps on the compressed PCF."""

    def __init__(self, node: Node, cm: CompressionMaster):
        self.node = node
        self.cm = cm
        self.applied: list[int] = []

    def start(self, first_cycle: int = 1) -> None:
        self.cm.open_cycle(first_cycle)
        self._arm(first_cycle)

    def _arm(self, k: int) -> None:
        self.node.at_local(k * self.cm.cycle, self._dispatch, k)

    def _dispatch(self, k: int) -> None:
        self.sm_dispatch_pcf(k)
        self._arm(k + 1)

    def sm_dispatch_pcf(self, k: int) -> PcfFrame:
        pcf = PcfFrame(k, self.node.name)
        delay = self.cm.path_delay(self.node.name, self.cm.node.name)
        self.node.sim.schedule(self.node.sim.now + delay, self.cm.on_pcf, pcf,
                               target=self.cm.node.name)
        return pcf

    def on_compressed(self, pcf: PcfFrame, path_delay: int) -> None:
        step = pcf.corrections.get(self.node.name) if pcf.corrections else None
        if step is None:
            step = self.node.timestamp() - (pcf.dispatch_local + path_delay)
        self.node.clock.apply_correction(step)
        self.applied.append(step)


class SyncClient:
    """Adopts the compressed time from the CM without contributing to it."""

    def __init__(self, node: Node):
        self.node = node
        self.applied: list[int] = []

    def on_compressed(self, pcf: PcfFrame, path_delay: int) -> None:
        step = self.node.timestamp() - (pcf.dispatch_local + path_delay)
        self.node.clock.apply_correction(step)
        self.applied.append(step)
