"""Offset series, jitter, reliability and latency statistics, plus CSV output."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

from .traffic import FrameRecord

SCHEMA_VERSION = 1

FRAME_COLUMNS = ["run_id", "pmu_id", "seq", "created_ns", "received_ns", "received_local_ns",
                 "latency_ns", "slot_wait_ns", "contention_ns", "air_ns", "propagation_ns",
                 "gateway_wait_ns", "backbone_ns"]
OFFSET_COLUMNS = ["run_id", "t_ns", "node_id", "reference_id", "offset_ns"]
PTP_COLUMNS = ["run_id", "ue_id", "seq", "t1", "t2", "t3", "t4", "delay_ns", "offset_ns"]


@dataclass(frozen=True)
class OffsetSample:
    t: int
    node_id: str
    reference_id: str
    offset_ns: int


def jitter(reception_times: Sequence[float], nominal_period: float,
           seqs: Optional[Sequence[int]] = None) -> Optional[float]:
    """Peak-to-peak deviation from a periodic schedule anchored at the first sample.

    ``seqs`` gives each reception's frame index so gaps from lost frames do
    not shift the schedule; by default the i-th sample is frame i.
    """
    if len(reception_times) < 2:
        return None
    if seqs is None:
        seqs = range(len(reception_times))
    r0, s0 = reception_times[0], seqs[0]
    devs = [r - (r0 + (s - s0) * nominal_period) for r, s in zip(reception_times, seqs)]
    return max(devs) - min(devs)


def jitter_std(reception_times: Sequence[float], nominal_period: float,
               seqs: Optional[Sequence[int]] = None) -> Optional[float]:
    if len(reception_times) < 2:
        return None
    if seqs is None:
        seqs = range(len(reception_times))
    r0, s0 = reception_times[0], seqs[0]
    return statistics.pstdev(r - (r0 + (s - s0) * nominal_period)
                             for r, s in zip(reception_times, seqs))


def reliability(latencies: Iterable[int], generated: int, deadline: int) -> Optional[float]:
    """Fraction of generated frames that reached the PDC within ``deadline``."""
    if deadline <= 0:
        raise ValueError("deadline must be positive")
    if generated <= 0:
        return None
    on_time = sum(1 for lat in latencies if lat <= deadline)
    return on_time / generated


def offset_series(clocks: dict, reference: str, nodes: Iterable[str], times: Iterable[int]
                  ) -> list[OffsetSample]:
    """Ground-truth ``local(node) - local(reference)`` at each instant."""
    ref = clocks[reference]
    out = []
    for t in times:
        ref_local = ref.local_now(t)
        for n in nodes:
            out.append(OffsetSample(t, n, reference, clocks[n].local_now(t) - ref_local))
    return out


def per_pmu_jitter(log: Iterable[FrameRecord], nominal_period: float,
                   local: bool = True) -> dict[str, float]:
    series: dict[str, list[FrameRecord]] = {}
    for rec in log:
        series.setdefault(rec.pmu_id, []).append(rec)
    out = {}
    for pmu, recs in sorted(series.items()):
        recs.sort(key=lambda r: r.seq)
        times = [r.received_local_ns if local else r.received_ns for r in recs]
        j = jitter(times, nominal_period, [r.seq for r in recs])
        if j is not None:
            out[pmu] = j
    return out


@dataclass
class RunSummary:
    run_id: str
    mode: str
    seed: int
    pmu_count: int
    sync_interval_ns: int
    generated: int
    received: int
    jitter_ns: Optional[float]
    jitter_std_ns: Optional[float]
    reliability: Optional[float]
    mean_latency_ns: Optional[float]
    max_latency_ns: Optional[int]
    max_abs_ue_offset_ns: Optional[int]
    max_abs_backbone_offset_ns: Optional[int]
    air_collisions: int
    drops: dict[str, int] = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        drops = d.pop("drops")
        for k in sorted(drops):
            d[f"drop_{k}"] = drops[k]
        return d


def summarize(run_id: str, mode: str, seed: int, pmu_count: int, sync_interval: int,
              log: Sequence[FrameRecord], generated: int, deadline: int,
              nominal_period: float, ue_offsets: Sequence[OffsetSample],
              backbone_offsets: Sequence[OffsetSample], collisions: int,
              drops: dict[str, int]) -> RunSummary:
    jit = per_pmu_jitter(log, nominal_period)
    stds = []
    by_pmu: dict[str, list[FrameRecord]] = {}
    for r in log:
        by_pmu.setdefault(r.pmu_id, []).append(r)
    for recs in by_pmu.values():
        recs.sort(key=lambda r: r.seq)
        s = jitter_std([r.received_local_ns for r in recs], nominal_period,
                       [r.seq for r in recs])
        if s is not None:
            stds.append(s)
    lats = [r.latency_ns for r in log]
    return RunSummary(
        run_id=run_id, mode=mode, seed=seed, pmu_count=pmu_count,
        sync_interval_ns=sync_interval, generated=generated, received=len(log),
        jitter_ns=max(jit.values()) if jit else None,
        jitter_std_ns=max(stds) if stds else None,
        reliability=reliability(lats, generated, deadline),
        mean_latency_ns=statistics.fmean(lats) if lats else None,
        max_latency_ns=max(lats) if lats else None,
        max_abs_ue_offset_ns=max((abs(s.offset_ns) for s in ue_offsets), default=None),
        max_abs_backbone_offset_ns=max((abs(s.offset_ns) for s in backbone_offsets),
                                       default=None),
        air_collisions=collisions,
        drops=dict(drops),
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(round(v, 6))
    return str(v)


def write_csv(path, kind: str, columns: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {kind} v{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def frame_rows(run_id: str, log: Iterable[FrameRecord]):
    for r in log:
        d = asdict(r)
        d["run_id"] = run_id
        d["latency_ns"] = r.latency_ns
        yield d


def offset_rows(run_id: str, samples: Iterable[OffsetSample]):
    for s in samples:
        yield {"run_id": run_id, "t_ns": s.t, "node_id": s.node_id,
               "reference_id": s.reference_id, "offset_ns": s.offset_ns}


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))
