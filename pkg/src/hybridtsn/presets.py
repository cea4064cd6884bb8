"""Experiment presets for the offset, jitter and baseline figures, and batch sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional

from .config import ScenarioConfig
from .metrics import write_csv
from .network import run_scenario, write_outputs

PRESETS = ("fig4a", "fig4b", "fig5", "fig6")
PMU_SWEEP = (2, 4, 8, 16)
OUTPUT_ROOT_ENV = "HYBRIDTSN_OUTPUT_ROOT"
DEFAULT_DURATION_NS = 10_000_000_000
MS = 1_000_000


class PresetError(RuntimeError):
    def __init__(self, run_id: str, cause: BaseException):
        self.run_id = run_id
        super().__init__(f"run {run_id} failed: {cause!r}")


def _tag(mode: str) -> str:
    return {"hybrid_tte_ptp": "hybrid", "tte_traditional_urllc": "traditional",
            "ethernet_ptp_urllc": "ethernet"}[mode]


def expand_preset(preset: str, seeds: Iterable[int],
                  duration_ns: int = DEFAULT_DURATION_NS,
                  pmu_counts: Iterable[int] = PMU_SWEEP) -> list[ScenarioConfig]:
    """Every scenario a preset runs, one per (variant, seed)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    variants: list[tuple[str, int, int]] = []  # mode, sync interval, PMUs per gNB
    if preset == "fig4a":
        variants = [("hybrid_tte_ptp", 3 * MS, 8)]
    elif preset == "fig4b":
        variants = [("tte_traditional_urllc", 3 * MS, 8), ("hybrid_tte_ptp", 3 * MS, 8),
                    ("hybrid_tte_ptp", 15 * MS, 8)]
    elif preset == "fig5":
        variants = [(m, s * MS, n) for m in ("hybrid_tte_ptp", "tte_traditional_urllc")
                    for s in (1, 3) for n in pmu_counts]
    else:
        variants = [(m, 1 * MS, n) for m in ("hybrid_tte_ptp", "ethernet_ptp_urllc")
                    for n in pmu_counts]
    out = []
    for seed in seeds:
        for mode, sync, n in variants:
            run_id = f"{_tag(mode)}-S{sync // MS}ms-n{n}-seed{seed}"
            out.append(ScenarioConfig(mode=mode, seed=seed, sync_interval_ns=sync,
                                      pmu_count=n, duration_ns=duration_ns, run_id=run_id))
    return out


def output_root(out: Optional[str]) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))


def _run_one(cfg: ScenarioConfig, out_dir: str) -> dict:
    try:
        result = run_scenario(cfg)
        write_outputs(result, Path(out_dir) / cfg.run_id)
    except Exception as exc:  # noqa: BLE001 - identify the failing run
        raise PresetError(cfg.run_id, exc) from exc
    return result.summary.row()


def run_preset(preset: str, seeds: Iterable[int], out: Optional[str] = None, jobs: int = 1,
               duration_ns: int = DEFAULT_DURATION_NS,
               pmu_counts: Iterable[int] = PMU_SWEEP) -> Path:
    """Run a preset and write one directory per run plus a batch summary.csv."""
    configs = expand_preset(preset, list(seeds), duration_ns, list(pmu_counts))
    root = output_root(out) / preset
    root.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, configs, [str(root)] * len(configs)))
    else:
        rows = [_run_one(cfg, str(root)) for cfg in configs]
    columns = sorted({k for r in rows for k in r}, key=lambda k: (k.startswith("drop_"), k))
    head = [c for c in ("run_id", "mode", "seed", "pmu_count", "sync_interval_ns") if c in columns]
    columns = head + [c for c in columns if c not in head]
    write_csv(root / "summary.csv", "summary", columns, rows)
    return root
