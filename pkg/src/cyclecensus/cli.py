"""Command-line entry point.

    cyclecensus <experiment> --config <file.json> [--seed N] [--trials N]
                [--workers N] [--out <path>] [--format csv|json]

Exit codes: 0 success, 2 configuration error, 3 run error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, RunError
from .harness import (EXPERIMENTS, ExperimentConfig, default_workers,
                      emit_report, run_experiment)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclecensus",
        description="Monte Carlo experiments on limit cycles of random "
                    "planar polynomial vector fields.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override master_seed")
    parser.add_argument("--trials", type=int, default=None,
                        help="override trial count")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: CYCLECENSUS_WORKERS or 1)")
    parser.add_argument("--out", default=None,
                        help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if not isinstance(raw, dict):
        print("config error: top-level JSON must be an object", file=sys.stderr)
        return 2
    if raw.get("experiment", args.experiment) != args.experiment:
        print(f"config error: config names experiment {raw.get('experiment')!r} "
              f"but {args.experiment!r} was requested", file=sys.stderr)
        return 2
    raw["experiment"] = args.experiment
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.trials is not None:
        raw["trials"] = args.trials
    raw["workers"] = args.workers if args.workers is not None else default_workers()
    try:
        config = ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(config)
        emit_report(report, format=args.format, path=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RunError, Exception) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
