"""IEEE 1588 end-to-end and peer-delay exchanges.

A :class:`PtpPrimary` runs the two-step Sync/Follow_Up sequence once per
synchronization interval; each :class:`PtpSecondary` answers with a
Delay_Req, and on the Delay_Resp computes the path delay and its offset from
the four timestamps and steps its clock.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .clock import DriftingClock
from .node import Node


class NegativeDelayError(ValueError):
    """The four timestamps imply a negative path delay."""


class MsgKind(str, enum.Enum):
    SYNC = "Sync"
    FOLLOW_UP = "FollowUp"
    DELAY_REQ = "DelayReq"
    DELAY_RESP = "DelayResp"
    PDELAY_REQ = "PDelayReq"
    PDELAY_RESP = "PDelayResp"


@dataclass(frozen=True)
class PtpMessage:
    kind: MsgKind
    seq: int
    src: str
    dst: str
    carried_timestamp: Optional[int] = None


@dataclass
class PtpExchangeRecord:
    seq: int
    t1: Optional[int] = None
    t2: Optional[int] = None
    t3: Optional[int] = None
    t4: Optional[int] = None
    derived_delay: Optional[int] = None
    derived_offset: Optional[int] = None
    # global time of Sync reception, used to age out incomplete rounds
    opened_at: int = 0

    @property
    def complete(self) -> bool:
        return None not in (self.t1, self.t2, self.t3, self.t4)


def compute_propagation_delay(t1: int, t2: int, t3: int, t4: int) -> int:
    """``((t4 - t3) + (t2 - t1)) / 2`` rounded half-up to the nanosecond."""
    total = (t4 - t3) + (t2 - t1)
    delay = (total + 1) // 2
    if delay < 0:
        raise NegativeDelayError(
            f"negative path delay {delay} ns from t1={t1} t2={t2} t3={t3} t4={t4}")
    return delay


def compute_offset(t1: int, t2: int, propagation_delay: int) -> int:
    return t2 - t1 - propagation_delay


Send = Callable[[PtpMessage], None]


class PtpPrimary:
    """Primary side; ``links`` maps a secondary name to its downlink transport."""

    def __init__(self, node: Node, sync_interval: int, phase: int = 0,
                 t1_estimate_error: int = 1_000):
        self.node = node
        self.sync_interval = sync_interval
        self.phase = phase
        self.t1_estimate_error = t1_estimate_error
        self.links: dict[str, Send] = {}
        self.seq = 0
        self.sent: Counter = Counter()

    def associate(self, secondary: str, send: Send) -> None:
        self.links[secondary] = send

    def start(self, first_cycle: int = 1) -> None:
        self._arm(first_cycle)

    def _arm(self, k: int) -> None:
        self.node.at_local(k * self.sync_interval + self.phase, self._tick, k)

    def _tick(self, k: int) -> None:
        self.on_interval()
        self._arm(k + 1)

    def on_interval(self) -> list[PtpMessage]:
        """Emit Sync then Follow_Up to every associated secondary."""
        self.seq += 1
        out = []
        for name, send in self.links.items():
            t1 = self.node.timestamp()
            sync = PtpMessage(MsgKind.SYNC, self.seq, self.node.name, name,
                              t1 + self.t1_estimate_error)
            follow = PtpMessage(MsgKind.FOLLOW_UP, self.seq, self.node.name, name, t1)
            for msg in (sync, follow):
                send(msg)
                self.sent[msg.kind] += 1
                out.append(msg)
        return out

    def on_message(self, msg: PtpMessage) -> Optional[PtpMessage]:
        if msg.kind is not MsgKind.DELAY_REQ:
            return None
        t4 = self.node.timestamp()
        resp = PtpMessage(MsgKind.DELAY_RESP, msg.seq, self.node.name, msg.src, t4)
        self.links[msg.src](resp)
        self.sent[resp.kind] += 1
        return resp


class PtpSecondary:
    """Secondary side of the end-to-end exchange, with step correction."""

    def __init__(self, node: Node, sync_interval: int, uplink: Optional[Send] = None,
                 on_exchange: Optional[Callable[[str, PtpExchangeRecord], None]] = None):
        self.node = node
        self.sync_interval = sync_interval
        self.uplink = uplink
        self.on_exchange = on_exchange
        self.pending: dict[int, PtpExchangeRecord] = {}
        self.last_offset: Optional[int] = None
        self.exchanges: list[PtpExchangeRecord] = []
        self.counters: Counter = Counter()
        self.sent: Counter = Counter()

    @property
    def clock(self) -> DriftingClock:
        return self.node.clock

    def _discard_stale(self) -> None:
        horizon = self.node.sim.now - 2 * self.sync_interval
        for seq in [s for s, r in self.pending.items() if r.opened_at < horizon]:
            del self.pending[seq]
            self.counters["stale_discarded"] += 1

    def on_message(self, msg: PtpMessage) -> tuple[Optional[PtpMessage], Optional[int]]:
        """Handle one message; returns ``(delay_req, applied_correction)``."""
        kind = msg.kind
        if kind is MsgKind.SYNC:
            self._discard_stale()
            self.pending[msg.seq] = PtpExchangeRecord(
                msg.seq, t2=self.node.timestamp(), opened_at=self.node.sim.now)
            return None, None
        rec = self.pending.get(msg.seq)
        if rec is None:
            self.counters["orphan_" + kind.value] += 1
            return None, None
        if kind is MsgKind.FOLLOW_UP:
            rec.t1 = msg.carried_timestamp
            rec.t3 = self.node.timestamp()
            req = PtpMessage(MsgKind.DELAY_REQ, msg.seq, self.node.name, msg.src)
            if self.uplink is not None:
                self.uplink(req)
            self.sent[req.kind] += 1
            return req, None
        if kind is MsgKind.DELAY_RESP:
            if rec.t3 is None:
                self.counters["orphan_" + kind.value] += 1
                return None, None
            del self.pending[msg.seq]
            rec.t4 = msg.carried_timestamp
            try:
                rec.derived_delay = compute_propagation_delay(rec.t1, rec.t2, rec.t3, rec.t4)
            except NegativeDelayError:
                self.counters["negative_delay"] += 1
                return None, None
            rec.derived_offset = compute_offset(rec.t1, rec.t2, rec.derived_delay)
            self.clock.apply_correction(rec.derived_offset)
            self.last_offset = rec.derived_offset
            self.exchanges.append(rec)
            if self.on_exchange is not None:
                self.on_exchange(self.node.name, rec)
            return None, rec.derived_offset
        return None, None


def peer_delay_measure(initiator: DriftingClock, responder: DriftingClock,
                       link_delay: int, start: int, turnaround: int = 0) -> int:
    """One PDelay_Req/PDelay_Resp round over a symmetric link.

    ``t1``/``t4`` are taken on the initiator's clock, ``t2``/``t3`` on the
    responder's, and the delay follows from the same four-timestamp formula.
    """
    t1 = initiator.timestamp(start)
    t2 = responder.timestamp(start + link_delay)
    t3 = responder.timestamp(start + link_delay + turnaround)
    t4 = initiator.timestamp(start + 2 * link_delay + turnaround)
    return compute_propagation_delay(t1, t2, t3, t4)
