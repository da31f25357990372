#!/usr/bin/env python3
"""Run the full experiment battery with default configs and print a table.

Usage: python scripts/run_experiments.py [--out DIR] [--threads N] [--only NAME ...]

The defaults reproduce the project's headline numbers end to end; expect
roughly twenty minutes single-threaded, dominated by `correctness`.
"""
import argparse
import dataclasses
import sys
import time

from specsl import EXPERIMENTS, default_config, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker process count")
    parser.add_argument(
        "--only", nargs="*", choices=EXPERIMENTS, help="subset of experiments to run"
    )
    args = parser.parse_args()

    names = args.only if args.only else list(EXPERIMENTS)
    all_passed = True
    print(f"{'experiment':<18} {'verdict':<8} {'seconds':>8}")
    for name in names:
        cfg = dataclasses.replace(
            default_config(name, out_dir=args.out), thread_count=args.threads
        )
        started = time.perf_counter()
        result = run_experiment(cfg)
        elapsed = time.perf_counter() - started
        verdict = "PASS" if result.passed else "FAIL"
        all_passed = all_passed and result.passed
        print(f"{name:<18} {verdict:<8} {elapsed:>8.1f}")
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
