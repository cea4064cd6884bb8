"""Assembles a scenario into nodes, links and protocol agents, then runs it."""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import __version__
from .clock import DriftingClock, draw_drift
from .config import TTE_MODES, ScenarioConfig
from .engine import RandomStreams, Simulator
from .metrics import (FRAME_COLUMNS, OFFSET_COLUMNS, PTP_COLUMNS, OffsetSample, RunSummary,
                      frame_rows, offset_rows, summarize, write_csv)
from .node import Node
from .ptp import MsgKind, PtpExchangeRecord, PtpMessage, PtpPrimary, PtpSecondary, peer_delay_measure
from .tte import (PCF_BYTES, CompressionMaster, EgressPort, Switch, SyncClient, SyncMaster,
                  TteEndpoint, TteLink, VirtualLink, VlRequest, plan_virtual_links,
                  port_windows, serialization_ns)
from .traffic import (FRAME_PERIOD, OVERHEAD_BYTES, CrossTrafficSource, GatewayBinding, Gnb, Pdc,
                      Pmu)
from .urllc import CellReceiver, DcchChannel, SlotGrid, UplinkReservation, propagation_delay

# frame losses that remove a synchrophasor frame from the pipeline
FRAME_DROP_COUNTERS = ("air_retry_exhausted", "gateway_no_binding", "tt_unknown_vl",
                       "tt_window_violation", "pmu_be_queue_overflow")
STAGGER_RANGE_SLOTS = 16


def pmu_names(cfg: ScenarioConfig, gnb: str) -> list[str]:
    return [f"{gnb}.pmu{i}" for i in range(cfg.pmu_count)]


def backbone_adjacency(cfg: ScenarioConfig) -> dict[str, list[str]]:
    topo = cfg.topology
    adj: dict[str, list[str]] = {s.name: [] for s in topo.switches}
    for a, b in topo.switch_links:
        adj[a].append(b)
        adj[b].append(a)
    for n in list(topo.gnbs) + list(topo.end_systems):
        adj.setdefault(n.name, []).append(n.switch)
        adj[n.switch].append(n.name)
    return adj


def shortest_path(adj: dict[str, list[str]], src: str, dst: str,
                  relays: set[str]) -> list[str]:
    """BFS path; only nodes in ``relays`` (the switches) forward traffic."""
    prev = {src: None}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        if cur == dst:
            break
        for nxt in adj[cur]:
            if nxt not in prev and (nxt == dst or nxt in relays):
                prev[nxt] = cur
                queue.append(nxt)
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]



@dataclass
class Plan:
    grids: dict[str, SlotGrid]
    reservations: dict[str, UplinkReservation]
    vls: list[VirtualLink]
    bindings: dict[str, GatewayBinding]
    links: dict[tuple[str, str], TteLink]
    paths: dict[str, list[str]]


def plan_schedules(cfg: ScenarioConfig) -> Plan:
    """Uplink reservations per cell and, in TTE modes, the VL schedule."""
    topo = cfg.topology
    adj = backbone_adjacency(cfg)
    relays = {s.name for s in topo.switches}
    links = {(a, b): TteLink((a, b)) for a in adj for b in adj[a]}
    grids, reservations = {}, {}
    for g in topo.gnbs:
        grid = grids[g.name] = SlotGrid(cfg.numerology)
        for ue in pmu_names(cfg, g.name):
            reservations[ue] = grid.reserve_uplink(ue, FRAME_PERIOD, 0)
    pdc = topo.pdc
    paths = {g.name: shortest_path(adj, g.name, pdc, relays) for g in topo.gnbs}
    vls: list[VirtualLink] = []
    bindings: dict[str, GatewayBinding] = {}
    if cfg.mode in TTE_MODES:
        guard = cfg.guard_ns
        wire = cfg.payload_bytes + OVERHEAD_BYTES
        requests = []
        vl_id = 1
        for g in topo.gnbs:
            slot = grids[g.name].slot
            for ue in pmu_names(cfg, g.name):
                if cfg.mode == "hybrid_tte_ptp":
                    # the frame is in the gNB one slot after its grant opens
                    earliest = reservations[ue].max_residue() + slot + guard
                else:
                    earliest = 0
                requests.append(VlRequest(vl_id, g.name, [pdc], paths[g.name], earliest, wire))
                bindings[ue] = GatewayBinding(g.name, vl_id)
                vl_id += 1
        period = FRAME_PERIOD if cfg.mode == "hybrid_tte_ptp" else Fraction(cfg.cycle_ns)
        vls = plan_virtual_links(requests, period, guard, links)
    return Plan(grids, reservations, vls, bindings, links, paths)


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: RunSummary
    frames: list
    ue_offsets: list[OffsetSample]
    backbone_offsets: list[OffsetSample]
    ptp_records: list[tuple[str, PtpExchangeRecord]]
    counters: Counter
    generated_total: int
    metadata: dict
    network: "Network" = field(repr=False, default=None)

    def frame_drops(self) -> int:
        return sum(self.counters[k] for k in FRAME_DROP_COUNTERS)


class Network:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.sim = Simulator()
        self.streams = RandomStreams(cfg.seed)
        self.counters: Counter = Counter()
        self.plan = plan_schedules(cfg)
        self.adj = backbone_adjacency(cfg)
        self.relays = {s.name for s in cfg.topology.switches}
        self.clocks: dict[str, DriftingClock] = {}
        self.nodes: dict[str, Node] = {}
        self.pmus: dict[str, Pmu] = {}
        self.gnbs: dict[str, Gnb] = {}
        self.cells: dict[str, CellReceiver] = {}
        self.distances: dict[str, float] = {}
        self.ptp_records: list[tuple[str, PtpExchangeRecord]] = []
        self.ptp_secondaries: dict[str, PtpSecondary] = {}
        self.ptp_primaries: dict[str, PtpPrimary] = {}
        self.ue_offsets: list[OffsetSample] = []
        self.backbone_offsets: list[OffsetSample] = []
        self.cm: Optional[CompressionMaster] = None
        self.sync_masters: dict[str, SyncMaster] = {}
        self.sync_clients: dict[str, SyncClient] = {}
        self._build()

    # -- construction -----------------------------------------------------

    def _clock(self, name: str) -> DriftingClock:
        cfg = self.cfg
        rho = draw_drift(self.streams.get(f"drift/{name}"), cfg.drift_bound_ppm,
                         cfg.drift_distribution)
        clock = DriftingClock(rho, quantum=cfg.timestamp_quantum_ns)
        self.clocks[name] = clock
        return clock

    @property
    def stop_at(self) -> int:
        return self.cfg.duration_ns

    def _build(self) -> None:
        cfg, sim, topo = self.cfg, self.sim, self.cfg.topology
        pdc_name = topo.pdc
        for s in topo.switches:
            sw = Switch(s.name, sim, self._clock(s.name), self.counters)
            sw.guard = cfg.guard_ns
            self.nodes[s.name] = sw
        mode = "be" if cfg.mode == "ethernet_ptp_urllc" else "tt"
        for g in topo.gnbs:
            gnb = Gnb(g.name, sim, self._clock(g.name), self.counters, pdc=pdc_name,
                      gateway_mode=mode)
            self.nodes[g.name] = self.gnbs[g.name] = gnb
        for e in topo.end_systems:
            if e.kind == "pdc":
                node = Pdc(e.name, sim, self._clock(e.name), self.counters)
                self.pdc = node
            else:
                node = CrossTrafficSource(e.name, sim, self._clock(e.name), self.counters,
                                          dst=pdc_name, load=cfg.background_load,
                                          stream=self.streams.get(f"traffic/{e.name}"),
                                          stop_at=self.stop_at)
            self.nodes[e.name] = node
        self._wire_backbone()
        self._build_cells()
        if cfg.mode in TTE_MODES:
            self._build_tte_sync()
        else:
            self._build_backbone_ptp()

    def _wire_backbone(self) -> None:
        adj = self.adj
        for (a, b), link in self.plan.links.items():
            owner: TteEndpoint = self.nodes[a]
            owner.ports[b] = EgressPort(owner, b, link, self.nodes[b].receive, self.counters,
                                        capacity=self.cfg.be_queue_capacity)
        names = list(adj)
        for src in names:
            node = self.nodes[src]
            for dst in names:
                if dst != src:
                    path = shortest_path(adj, src, dst, self.relays)
                    node.routes[dst] = path[1]
        for vl in self.plan.vls:
            for h in vl.hops:
                self.nodes[h.node].vl_table[vl.vl_id] = vl
        for (a, b), entries in port_windows(self.plan.vls).items():
            self.nodes[a].ports[b].windows = entries
        for gnb in self.gnbs.values():
            gnb.bindings = {ue: b for ue, b in self.plan.bindings.items() if b.gnb_id == gnb.name}

    def _hops(self, a: str, b: str) -> int:
        return len(shortest_path(self.adj, a, b, self.relays)) - 1

    def control_path_delay(self, a: str, b: str) -> int:
        """Fixed delay of a minimum-size control frame between backbone nodes."""
        return self._hops(a, b) * (serialization_ns(PCF_BYTES) + 100)

    def _build_tte_sync(self) -> None:
        cfg, topo = self.cfg, self.cfg.topology
        roles = {s.name: s.role for s in topo.switches}
        roles.update({g.name: g.role for g in topo.gnbs})
        roles.update({e.name: e.role for e in topo.end_systems})
        cm_name = next(n for n, r in roles.items() if r == "CM")
        delays = {}

        def path_delay(a, b):
            key = (a, b)
            if key not in delays:
                delays[key] = self.control_path_delay(a, b)
            return delays[key]

        self.cm = CompressionMaster(self.nodes[cm_name], cfg.cycle_ns, cfg.guard_ns, path_delay)
        for name, role in roles.items():
            if role == "SM":
                sm = SyncMaster(self.nodes[name], self.cm)
                self.cm.masters[name] = sm
                self.sync_masters[name] = sm
            elif role == "SC":
                sc = SyncClient(self.nodes[name])
                self.cm.clients[name] = sc
                self.sync_clients[name] = sc
        self.backbone_reference = cm_name

    def _build_backbone_ptp(self) -> None:
        cfg = self.cfg
        primary_name = cfg.ptp_primary
        primary = PtpPrimary(self.nodes[primary_name], cfg.sync_interval_ns, phase=0,
                             t1_estimate_error=cfg.t1_estimate_error_ns)
        self.ptp_primaries[primary_name] = primary
        for name, node in self.nodes.items():
            if name == primary_name or isinstance(node, Pmu):
                continue
            delay = self.control_path_delay(primary_name, name)
            sec = PtpSecondary(node, cfg.sync_interval_ns)
            sec.uplink = self._fixed_transport(delay, primary.on_message)
            primary.associate(name, self._fixed_transport(delay, sec.on_message))
            self.ptp_secondaries[name] = sec
        self.backbone_reference = primary_name

    def _fixed_transport(self, delay: int, handler):
        def send(msg: PtpMessage) -> None:
            self.sim.schedule(self.sim.now + delay, handler, msg, target=msg.dst)
        return send

    def _build_cells(self) -> None:
        cfg = self.cfg
        use_ptp = cfg.mode in ("hybrid_tte_ptp", "ethernet_ptp_urllc")
        lo, hi = cfg.ue_distance_m
        for gname, gnb in self.gnbs.items():
            grid = self.plan.grids[gname]
            fer_stream = self.streams.get(f"fer/{gname}")

            def on_success(tx, gnb=gnb, fer_stream=fer_stream):
                if cfg.air_frame_error_rate > 0 and fer_stream.random() < cfg.air_frame_error_rate:
                    self.counters["air_frame_error"] += 1
                    gnb.on_collision(tx)
                else:
                    gnb.on_uplink(tx)

            cell = CellReceiver(self.sim, grid.slot, on_success=on_success,
                                on_collision=gnb.on_collision)
            self.cells[gname] = cell
            primary = None
            if use_ptp:
                primary = PtpPrimary(gnb, cfg.sync_interval_ns, phase=cfg.ptp_phase_ns,
                                     t1_estimate_error=cfg.t1_estimate_error_ns)
                self.ptp_primaries[gname] = primary
            dcch_latency = cfg.dcch_latency_ns if cfg.dcch_latency_ns is not None else grid.slot
            for ue in pmu_names(cfg, gname):
                clock = self._clock(ue)
                dist = self.streams.get(f"distance/{ue}").uniform(lo, hi) if hi > lo else lo
                self.distances[ue] = dist
                prop = propagation_delay(dist)
                ta = peer_delay_measure(gnb.clock, clock, prop, 0)
                stagger = self.streams.get(f"stagger/{ue}").randrange(STAGGER_RANGE_SLOTS)
                pmu = Pmu(ue, self.sim, clock, reservation=self.plan.reservations[ue],
                          propagation=prop, timing_advance=ta, cell=cell,
                          stagger_slots=stagger, max_retransmissions=cfg.max_retransmissions,
                          counters=self.counters, stop_at=self.stop_at,
                          payload_bytes=cfg.payload_bytes)
                self.nodes[ue] = self.pmus[ue] = gnb.pmus[ue] = pmu
                if primary is not None:
                    chan = DcchChannel(self.sim, dcch_latency, prop, cfg.dcch_loss,
                                       self.streams.get(f"dcch/{ue}"))
                    sec = PtpSecondary(pmu, cfg.sync_interval_ns,
                                       on_exchange=self._record_exchange)
                    sec.uplink = lambda m, chan=chan, h=primary.on_message: chan.deliver("ul", m, h)
                    primary.associate(
                        ue, lambda m, chan=chan, h=sec.on_message: chan.deliver("dl", m, h))
                    self.ptp_secondaries[ue] = sec

    def _record_exchange(self, ue: str, rec: PtpExchangeRecord) -> None:
        self.ptp_records.append((ue, rec))

    # -- running ----------------------------------------------------------

    def _sample_offsets(self) -> None:
        t = self.sim.now
        if t > self.cfg.duration_ns:
            return
        clocks = self.clocks
        for gname in self.gnbs:
            ref = clocks[gname].local_now(t)
            for ue in pmu_names(self.cfg, gname):
                self.ue_offsets.append(OffsetSample(t, ue, gname, clocks[ue].local_now(t) - ref))
        bref = self.backbone_reference
        ref = clocks[bref].local_now(t)
        for name, node in self.nodes.items():
            if name != bref and not isinstance(node, Pmu):
                self.backbone_offsets.append(
                    OffsetSample(t, name, bref, clocks[name].local_now(t) - ref))
        self.sim.schedule(t + self.cfg.offset_cadence_ns, self._sample_offsets, target="metrics")

    def start(self) -> None:
        if self.cm is not None:
            self.cm.open_cycle(1)
            self.cm.start(1)
            for sm in self.sync_masters.values():
                sm.start(1)
        for p in self.ptp_primaries.values():
            p.start(1)
        for pmu in self.pmus.values():
            pmu.start(1)
        for node in self.nodes.values():
            if isinstance(node, CrossTrafficSource):
                node.start()
        first = self.cfg.warmup_ns
        cad = self.cfg.offset_cadence_ns
        first = -(-first // cad) * cad
        self.sim.schedule(first, self._sample_offsets, target="metrics")

    def run(self) -> RunResult:
        cfg = self.cfg
        self.start()
        self.sim.run_until(cfg.duration_ns + cfg.drain_ns)
        return self._collect()

    def _collect(self) -> RunResult:
        cfg = self.cfg
        frames = [f for p in self.pmus.values() for f in p.generated]
        generated_total = len(frames)
        accounted = len(self.pdc.log) + sum(self.counters[k] for k in FRAME_DROP_COUNTERS)
        self.counters["in_flight_at_end"] = generated_total - accounted
        warm = cfg.warmup_ns
        measured = [f for f in frames if f.created_global >= warm]
        log = [r for r in self.pdc.log if r.created_ns >= warm]
        collisions = sum(c.collisions for c in self.cells.values())
        drops = {k: self.counters[k] for k in FRAME_DROP_COUNTERS + ("in_flight_at_end",)}
        summary = summarize(cfg.run_id, cfg.mode, cfg.seed, cfg.pmu_count, cfg.sync_interval_ns,
                            log, len(measured), cfg.deadline_ns, float(FRAME_PERIOD),
                            self.ue_offsets, self.backbone_offsets, collisions, drops)
        return RunResult(cfg, summary, list(self.pdc.log), self.ue_offsets,
                         self.backbone_offsets, self.ptp_records, self.counters,
                         generated_total, self.metadata(), self)

    def metadata(self) -> dict:
        cfg = self.cfg
        vl_rows = [{"vl_id": vl.vl_id, "sender": vl.sender, "receivers": vl.receivers,
                    "period_ns": str(vl.period), "window_length_ns": vl.window_length,
                    "hops": [[h.node, h.next_node, h.dispatch_offset] for h in vl.hops]}
                   for vl in self.plan.vls]
        res_rows = {ue: {"slot_offset": r.slot_offset, "period_slots": r.period_slots,
                         "hyperperiod_slots": r.hyperperiod_slots,
                         "grants_per_hyperperiod": r.grants_per_hyperperiod}
                    for ue, r in self.plan.reservations.items()}
        return {
            "artifact": "hybridtsn",
            "version": __version__,
            "run_id": cfg.run_id,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "drift_ppm": {n: c.drift_rho * 1e6 for n, c in sorted(self.clocks.items())},
            "ue_distance_m": dict(sorted(self.distances.items())),
            "reservations": res_rows,
            "virtual_links": vl_rows,
            "air_frame_error_rate": cfg.air_frame_error_rate,
            "counters": dict(sorted(self.counters.items())),
        }


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    return Network(cfg).run()


def write_outputs(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_id = result.config.run_id
    write_csv(out / "summary.csv", "summary", list(result.summary.row().keys()),
              [result.summary.row()])
    write_csv(out / "frames.csv", "frames", FRAME_COLUMNS, frame_rows(run_id, result.frames))
    write_csv(out / "offsets.csv", "offsets", OFFSET_COLUMNS,
              offset_rows(run_id, result.ue_offsets + result.backbone_offsets))
    write_csv(out / "ptp_exchanges.csv", "ptp_exchanges", PTP_COLUMNS,
              ({"run_id": run_id, "ue_id": ue, "seq": r.seq, "t1": r.t1, "t2": r.t2,
                "t3": r.t3, "t4": r.t4, "delay_ns": r.derived_delay,
                "offset_ns": r.derived_offset} for ue, r in result.ptp_records))
    (out / "metadata.json").write_text(json.dumps(result.metadata, indent=2, sort_keys=True)
                                       + "\n")
    return out
