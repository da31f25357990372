"""Command line entry point.

One subcommand per experiment plus ``summarize``. Exit codes: 0 success,
1 experiment ran but its verdict failed, 2 usage error, 3 bad configuration
or unreadable/invalid input files, 4 unwritable output location.
"""
from __future__ import annotations

import argparse
import sys

from .experiments import (
    EXIT_CONFIG,
    EXIT_FAILED,
    EXIT_OK,
    EXIT_OUTPUT,
    EXPERIMENTS,
    ConfigError,
    default_config,
    load_config,
    run_experiment,
    summarize,
)

_DESCRIPTIONS = {
    "verify-grs": "exactness and rejection-rate checks for the shared-noise accept/reject step",
    "correctness": "two-sample tests of speculative vs plain sequential sampling",
    "exchangeability": "permutation tests of increment-block exchangeability",
    "scaling": "mean iteration count vs K on a log-log grid",
    "speedup": "oracle-call speedup at a single large K",
    "reparam": "time-change closed forms and round-trips",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specsl",
        description="Speculative sampling experiments for diffusion posteriors.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name])
        p.add_argument("--config", help="JSON config file overlaid on the defaults")
        p.add_argument("--seed", type=int, help="base seed override")
        p.add_argument("--threads", type=int, help="worker process count (default 1)")
        p.add_argument("--out", help="output directory (default 'results')")
        p.add_argument("--theta", type=int, help="fixed speculation depth override")
        p.add_argument(
            "--dump-traj",
            action="store_true",
            help="also write example trajectory CSVs where supported",
        )
    p = sub.add_parser("summarize", help="digest result JSON/CSV files")
    p.add_argument("paths", nargs="+", help="result files to summarize")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through.
        return int(exc.code or 0)

    if args.command == "summarize":
        code, report = summarize(args.paths)
        print(report)
        return code

    try:
        if args.config:
            cfg = load_config(args.config, experiment=args.command)
        else:
            cfg = default_config(args.command)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["thread_count"] = args.threads
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.theta is not None:
            overrides["theta"] = args.theta
        if args.dump_traj:
            overrides["dump_traj"] = True
        if overrides:
            import dataclasses

            cfg = dataclasses.replace(cfg, **overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    verdict = "PASS" if result.passed else "FAIL"
    print(f"{result.experiment}: {verdict}")
    print(f"  results: {result.json_path}")
    print(f"  rows:    {result.csv_path}")
    return EXIT_OK if result.passed else EXIT_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
