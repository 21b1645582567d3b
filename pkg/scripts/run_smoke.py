#!/usr/bin/env python3
"""Quick single-episode smoke run: lane family, baseline provider, textual summary."""
import argparse
import time

from guidedmpc import SolverConfig, generate_scenario, run_episode
from guidedmpc.suites import provider_for


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--family", default="lane")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--provider", default="baseline", choices=("baseline", "oracle"))
    args = parser.parse_args()

    _, world = generate_scenario(args.family, args.seed)
    provider = provider_for(args.provider, args.family)
    t0 = time.time()
    result = run_episode(world, provider, args.family, args.seed,
                         solver_config=SolverConfig(iterations=40, restarts=0))
    ticks = [r for r in result.records if r["type"] == "tick"]
    decisions = [r for r in result.records if r["type"] == "decision"]
    print(f"{args.family}/{args.seed} [{args.provider}]: {result.outcome} "
          f"after {result.duration:.1f} s ({len(ticks)} ticks, "
          f"{len(decisions)} decisions, {time.time() - t0:.1f} s wall)")
    for rec in decisions[:8]:
        tag = "EMERGENCY " if rec["emergency"] else ""
        print(f"  t={rec['t_active']:6.1f} {tag}{rec['rationale']}")


if __name__ == "__main__":
    main()
