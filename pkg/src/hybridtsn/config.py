"""Scenario configuration: schema, defaults, validation and YAML loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

MODES = ("hybrid_tte_ptp", "tte_traditional_urllc", "ethernet_ptp_urllc")
TTE_MODES = ("hybrid_tte_ptp", "tte_traditional_urllc")


class ConfigError(ValueError):
    """Schema or constraint violations; ``errors`` holds one message per problem."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class SwitchSpec:
    name: str
    role: str = "CM"


@dataclass
class GnbSpec:
    name: str
    switch: str
    role: str = "SM"


@dataclass
class EndSystemSpec:
    name: str
    switch: str
    kind: str = "client"  # "pdc" or "client"
    role: str = "SM"


@dataclass
class Topology:
    switches: list[SwitchSpec]
    gnbs: list[GnbSpec]
    end_systems: list[EndSystemSpec]
    switch_links: list[tuple[str, str]]
    ptp_primary: Optional[str] = None  # Ethernet baseline grandmaster; defaults to the CM

    @property
    def pdc(self) -> str:
        return next(e.name for e in self.end_systems if e.kind == "pdc")


def default_topology() -> Topology:
    """Two switches, two gNBs, a PDC and two further Ethernet clients."""
    return Topology(
        switches=[SwitchSpec("sw0", "CM"), SwitchSpec("sw1", "SC")],
        gnbs=[GnbSpec("gnb0", "sw0"), GnbSpec("gnb1", "sw1")],
        end_systems=[EndSystemSpec("pdc", "sw0", "pdc"),
                     EndSystemSpec("es0", "sw0"), EndSystemSpec("es1", "sw1")],
        switch_links=[("sw0", "sw1")],
    )


@dataclass
class ScenarioConfig:
    mode: str = "hybrid_tte_ptp"
    seed: int = 1
    duration_ns: int = 1_000_000_000
    sync_interval_ns: int = 3_000_000
    integration_cycle_ns: Optional[int] = None
    drift_bound_ppm: float = 50.0
    drift_distribution: str = "uniform"
    timestamp_quantum_ns: int = 8
    pmu_count: int = 8  # per gNB
    deadline_ns: int = 10_000_000
    warmup_cycles: int = 2
    offset_cadence_ns: int = 1_000_000
    numerology: int = 4
    payload_bytes: int = 100
    ue_distance_m: tuple[float, float] = (50.0, 500.0)
    dcch_latency_ns: Optional[int] = None  # one slot when unset
    dcch_loss: float = 0.0
    air_frame_error_rate: float = 0.0
    ptp_phase_ns: int = 50_000
    t1_estimate_error_ns: int = 1_000
    guard_drift_ppm: float = 100.0
    guard_factor: float = 2.0
    max_retransmissions: Optional[int] = 4
    background_load: float = 0.1  # per Ethernet client, fraction of link rate
    be_queue_capacity: int = 128
    drain_ns: int = 50_000_000
    run_id: str = "run"
    output_dir: Optional[str] = None
    topology: Topology = field(default_factory=default_topology)

    @property
    def cycle_ns(self) -> int:
        return self.integration_cycle_ns if self.integration_cycle_ns else self.sync_interval_ns

    @property
    def warmup_ns(self) -> int:
        return self.warmup_cycles * self.cycle_ns

    @property
    def guard_ns(self) -> int:
        return round(self.guard_factor * self.guard_drift_ppm * 1e-6 * self.cycle_ns)

    @property
    def ptp_primary(self) -> str:
        if self.topology.ptp_primary:
            return self.topology.ptp_primary
        return next(s.name for s in self.topology.switches if s.role == "CM")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ue_distance_m"] = list(self.ue_distance_m)
        d["topology"]["switch_links"] = [list(x) for x in self.topology.switch_links]
        d["integration_cycle_ns"] = self.cycle_ns
        return d


_SCALARS = {f.name: f for f in dataclasses.fields(ScenarioConfig) if f.name != "topology"}


def _build_topology(raw: Any, errors: list[str]) -> Topology:
    if not isinstance(raw, dict):
        errors.append("topology: expected a mapping")
        return default_topology()
    allowed = {"switches", "gnbs", "end_systems", "switch_links", "ptp_primary"}
    for k in raw:
        if k not in allowed:
            errors.append(f"topology.{k}: unknown field")

    def items(key, cls, required):
        out = []
        for i, entry in enumerate(raw.get(key, [])):
            path = f"topology.{key}[{i}]"
            if not isinstance(entry, dict):
                errors.append(f"{path}: expected a mapping")
                continue
            names = {f.name for f in dataclasses.fields(cls)}
            for k in entry:
                if k not in names:
                    errors.append(f"{path}.{k}: unknown field")
            missing = [r for r in required if r not in entry]
            for r in missing:
                errors.append(f"{path}.{r}: required")
            if not missing:
                out.append(cls(**{k: v for k, v in entry.items() if k in names}))
        return out

    links = []
    for i, pair in enumerate(raw.get("switch_links", [])):
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            errors.append(f"topology.switch_links[{i}]: expected [a, b]")
        else:
            links.append((str(pair[0]), str(pair[1])))
    return Topology(items("switches", SwitchSpec, ["name"]),
                    items("gnbs", GnbSpec, ["name", "switch"]),
                    items("end_systems", EndSystemSpec, ["name", "switch"]),
                    links, raw.get("ptp_primary"))


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a config from a parsed mapping, filling documented defaults."""
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    errors: list[str] = []
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key == "topology":
            kwargs["topology"] = _build_topology(value, errors)
            continue
        f = _SCALARS.get(key)
        if f is None:
            errors.append(f"{key}: unknown field")
            continue
        default = f.default
        if key == "ue_distance_m":
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                errors.append(f"{key}: expected [min, max]")
                continue
            value = (float(value[0]), float(value[1]))
        elif value is not None and isinstance(default, bool):
            if not isinstance(value, bool):
                errors.append(f"{key}: expected a boolean")
                continue
        elif value is not None and isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or int(value) != value:
                errors.append(f"{key}: expected an integer, got {value!r}")
                continue
            value = int(value)
        elif value is not None and isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append(f"{key}: expected a number, got {value!r}")
                continue
            value = float(value)
        kwargs[key] = value
    if errors:
        raise ConfigError(errors)
    cfg = ScenarioConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    """Field and role constraints; raises :class:`ConfigError` listing all problems."""
    errors: list[str] = []
    if cfg.mode not in MODES:
        errors.append(f"mode: must be one of {', '.join(MODES)}")
    for key in ("duration_ns", "sync_interval_ns", "deadline_ns", "offset_cadence_ns",
                "timestamp_quantum_ns", "payload_bytes"):
        if getattr(cfg, key) <= 0:
            errors.append(f"{key}: must be positive")
    if cfg.integration_cycle_ns is not None and cfg.integration_cycle_ns <= 0:
        errors.append("integration_cycle_ns: must be positive")
    if cfg.pmu_count < 1:
        errors.append("pmu_count: must be at least 1")
    if not 0 <= cfg.numerology <= 4:
        errors.append("numerology: must lie in [0, 4]")
    if cfg.drift_bound_ppm < 0:
        errors.append("drift_bound_ppm: must be non-negative")
    if cfg.drift_distribution not in ("uniform", "extremes"):
        errors.append("drift_distribution: must be 'uniform' or 'extremes'")
    lo, hi = cfg.ue_distance_m
    if lo < 0 or hi < lo:
        errors.append("ue_distance_m: need 0 <= min <= max")
    for key in ("dcch_loss", "air_frame_error_rate", "background_load"):
        v = getattr(cfg, key)
        if not 0 <= v < 1:
            errors.append(f"{key}: must lie in [0, 1)")
    if cfg.max_retransmissions is not None and cfg.max_retransmissions < 0:
        errors.append("max_retransmissions: must be non-negative")

    topo = cfg.topology
    names = [s.name for s in topo.switches] + [g.name for g in topo.gnbs] \
        + [e.name for e in topo.end_systems]
    seen = set()
    for n in names:
        if n in seen:
            errors.append(f"topology: duplicate node name {n!r}")
        seen.add(n)
    switch_names = {s.name for s in topo.switches}
    if not switch_names:
        errors.append("topology.switches: at least one switch required")
    for i, g in enumerate(topo.gnbs):
        if g.switch not in switch_names:
            errors.append(f"topology.gnbs[{i}].switch: unknown switch {g.switch!r}")
    for i, e in enumerate(topo.end_systems):
        if e.switch not in switch_names:
            errors.append(f"topology.end_systems[{i}].switch: unknown switch {e.switch!r}")
        if e.kind not in ("pdc", "client"):
            errors.append(f"topology.end_systems[{i}].kind: must be 'pdc' or 'client'")
    for i, (a, b) in enumerate(topo.switch_links):
        for n in (a, b):
            if n not in switch_names:
                errors.append(f"topology.switch_links[{i}]: unknown switch {n!r}")
    pdcs = [e.name for e in topo.end_systems if e.kind == "pdc"]
    if len(pdcs) != 1:
        errors.append(f"topology.end_systems: exactly one pdc required, found {len(pdcs)}")
    if not topo.gnbs:
        errors.append("topology.gnbs: at least one gNB required")

    roles = {}
    for i, s in enumerate(topo.switches):
        roles[s.name] = (f"topology.switches[{i}].role", s.role)
    for i, g in enumerate(topo.gnbs):
        roles[g.name] = (f"topology.gnbs[{i}].role", g.role)
    for i, e in enumerate(topo.end_systems):
        roles[e.name] = (f"topology.end_systems[{i}].role", e.role)
    for name, (path, role) in roles.items():
        if role not in ("CM", "SM", "SC"):
            errors.append(f"{path}: role must be CM, SM or SC")
    cms = [n for n, (_, r) in roles.items() if r == "CM"]
    if cfg.mode in TTE_MODES or cfg.mode not in MODES:
        if len(cms) != 1:
            errors.append("topology: exactly one compression master (CM) required, found "
                          f"{len(cms)}" + (f": {', '.join(cms)}" if cms else ""))
        for n in cms:
            if n not in switch_names:
                errors.append(f"topology: compression master {n!r} must be a switch")
    if cfg.mode == "ethernet_ptp_urllc":
        primary = topo.ptp_primary or (cms[0] if len(cms) == 1 else None)
        if primary is None:
            errors.append("topology.ptp_primary: required when no single CM is declared")
        elif primary not in switch_names:
            errors.append(f"topology.ptp_primary: {primary!r} is not a switch")
    if not errors and not _connected(topo):
        errors.append("topology.switch_links: switches do not form a connected network")
    if errors:
        raise ConfigError(errors)


def _connected(topo: Topology) -> bool:
    adj: dict[str, set[str]] = {s.name: set() for s in topo.switches}
    for a, b in topo.switch_links:
        adj[a].add(b)
        adj[b].add(a)
    start = topo.switches[0].name
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(adj)


def load_config(path) -> ScenarioConfig:
    """Parse a YAML scenario file and run all pre-simulation checks.

    Besides field and role validation this builds the uplink reservations and
    the TT schedule, so admission failures surface here rather than mid-run.
    """
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from exc
    cfg = config_from_dict(raw)
    check_admission(cfg)
    return cfg


def check_admission(cfg: ScenarioConfig) -> None:
    from .network import plan_schedules
    from .urllc import AdmissionError

    try:
        plan_schedules(cfg)
    except AdmissionError as exc:
        raise ConfigError([f"admission: {exc}"]) from exc
