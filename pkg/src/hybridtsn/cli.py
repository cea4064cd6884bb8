"""Command-line entry point: run, preset and validate."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .network import run_scenario, write_outputs
from .presets import PRESETS, PresetError, output_root, run_preset

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

log = logging.getLogger("hybridtsn")


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridtsn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario from a YAML config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output_dir or results/<run_id>)")

    pr = sub.add_parser("preset", help="run a figure preset over several seeds")
    pr.add_argument("preset", choices=PRESETS)
    pr.add_argument("--seeds", type=_seeds, default=[1])
    pr.add_argument("--out")
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--duration-ms", type=int, default=10_000)
    pr.add_argument("--pmu-counts", type=_seeds, default=None,
                    help="comma-separated PMU counts per gNB for sweeps")

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.mode}, {cfg.pmu_count} PMUs per gNB, seed {cfg.seed}")
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config)
            out = args.out or cfg.output_dir or str(output_root(None) / cfg.run_id)
            result = run_scenario(cfg)
            write_outputs(result, out)
            s = result.summary
            print(f"{cfg.run_id}: received {s.received}/{s.generated}, "
                  f"jitter {s.jitter_ns} ns, reliability {s.reliability} -> {out}")
            return EXIT_OK
        kwargs = {}
        if args.pmu_counts:
            kwargs["pmu_counts"] = args.pmu_counts
        root = run_preset(args.preset, args.seeds, args.out, jobs=args.jobs,
                          duration_ns=args.duration_ms * 1_000_000, **kwargs)
        print(f"{args.preset}: wrote {Path(root)}")
        return EXIT_OK
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PresetError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
