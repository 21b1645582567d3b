#!/usr/bin/env python3
"""Stage ablation on a suite: scene encoding and action-bias/weight guidance
enabled independently, mirroring the component-contribution study."""
import argparse
import time

from guidedmpc.metrics import CSV_COLUMNS, MetricsConfig
from guidedmpc.roads import load_suite_manifest
from guidedmpc.suites import run_suite

VARIANTS = [
    ("baseline", dict(kind="baseline")),
    ("encoder-only", dict(kind="oracle", use_encoder=True, use_guidance=False)),
    ("guidance-only", dict(kind="oracle", use_encoder=False, use_guidance=True)),
    ("full", dict(kind="oracle")),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--family", default="usi")
    parser.add_argument("--seeds", type=int, default=0)
    args = parser.parse_args()

    seeds = load_suite_manifest()[args.family]
    if args.seeds:
        seeds = seeds[: args.seeds]
    cfg = MetricsConfig(penalty_variant="intent")

    print(f"{args.family} ablation, {len(seeds)} seeds")
    print("variant        " + "  ".join(f"{c:>6s}" for c in CSV_COLUMNS))
    for name, kwargs in VARIANTS:
        t0 = time.time()
        suite = run_suite(args.family, seeds, **kwargs)
        report = suite.report(cfg)
        cells = "  ".join(f"{v:>6}" for v in report.row())
        print(f"{name:14s}{cells}   ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
