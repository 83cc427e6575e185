"""Command-line entry point: ``rislex run --config FILE [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import MODES, parse_config, run_experiment



def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rislex", description="Lexicographic EE/fairness optimization for RIS-assisted mmWave downlinks.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a Monte-Carlo experiment and write CSVs")
    run.add_argument("--config", help="flat 'key = value' config file")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, help="master seed; trial i uses seed + i")
    run.add_argument("--sweep", choices=["none", "pmax", "nris"])
    run.add_argument("--rho", help="comma-separated EE fractions, e.g. 0.85,0.5")
    run.add_argument("--out", help="output directory")
    run.add_argument("--mode", action="append", choices=MODES, help="restrict to a mode (repeatable)")
    run.add_argument("--workers", type=int, help="worker processes (default 1)")
    run.add_argument("--strict", action="store_true", help="fail on any invariant violation")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "trials": args.trials,
        "seed": args.seed,
        "sweep": args.sweep,
        "rho": args.rho,
        "out": args.out,
        "workers": args.workers,
        "modes": ",".join(args.mode) if args.mode else None,
        "strict": True if args.strict else None,
    }
    overrides = {k: (str(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v) for k, v in overrides.items()}
    try:
        spec = parse_config(args.config, overrides)
        result = run_experiment(spec)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"rislex: error: {exc}", file=sys.stderr)
        return 2
    print(f"{len(result.records)} trials written to {spec.out_dir}: {', '.join(sorted(result.tables))}, trials.csv, plots.gp")
    if result.violations:
        print(f"{len(result.violations)} invariant violations (see log)", file=sys.stderr)
        return 1
    return 0
