#!/usr/bin/env python3
"""Guided-decision runs versus the fixed-weight controller on the bundled
unsignalized-intersection suite, reported with the intent-variant penalties."""
import argparse
import time

from guidedmpc.metrics import CSV_COLUMNS, MetricsConfig
from guidedmpc.roads import load_suite_manifest
from guidedmpc.suites import run_suite


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--family", default="usi")
    parser.add_argument("--seeds", type=int, default=0,
                        help="limit to the first N suite seeds (0 = all 25)")
    parser.add_argument("--variant", default="intent", choices=("intent", "as_written"))
    args = parser.parse_args()

    seeds = load_suite_manifest()[args.family]
    if args.seeds:
        seeds = seeds[: args.seeds]
    cfg = MetricsConfig(penalty_variant=args.variant)

    print(f"{args.family} suite, {len(seeds)} seeds, penalties={args.variant}")
    print("method  " + "  ".join(f"{c:>6s}" for c in CSV_COLUMNS))
    for kind in ("baseline", "oracle"):
        t0 = time.time()
        suite = run_suite(args.family, seeds, kind)
        report = suite.report(cfg)
        cells = "  ".join(f"{v:>6}" for v in report.row())
        print(f"{kind:8s}{cells}   ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
