"""Experiment front end: run episode suites, evaluate logs, replay timelines."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from .coordination import oracle_coordinator, run_joint_episode
from .logs import LogFormatError, canonical, iter_records, read_jsonl, write_jsonl
from .metrics import MetricsConfig, aggregate_suite, report_csv, report_json
from .providers import (BaselineProvider, HttpTransport, LlmProvider, OracleProvider,
                        OracleRulebook, ScriptedProvider, TransportError)
from .roads import load_preset, load_suite_manifest
from .runtime import run_episode
from .scenarios import FAMILIES, generate_scenario, narrow_road_world

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def make_provider(cfg: RunConfig):
    if cfg.provider == "baseline":
        return BaselineProvider()
    if cfg.provider == "oracle":
        return OracleProvider(OracleRulebook(family=cfg.family))
    if cfg.provider == "scripted":
        if not cfg.scripted_path:
            raise ConfigError("scripted provider needs run.scripted_path")
        try:
            text = Path(cfg.scripted_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read scripted decisions: {exc}") from exc
        texts = [chunk.strip() + "\n" for chunk in text.split("\n---\n") if chunk.strip()]
        return ScriptedProvider(texts)
    if cfg.provider == "llm":
        try:
            transport = HttpTransport(model=cfg.llm_model)
        except TransportError as exc:
            raise ConfigError(str(exc)) from exc
        return LlmProvider(transport, timeout=cfg.llm_timeout)
    raise ConfigError(f"unknown provider {cfg.provider!r}")


def _episode_path(out: Path, family: str, seed: int) -> Path:
    return out / f"{family}_{seed:04d}.jsonl"


def cmd_run(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    if args.family:
        cfg = replace(cfg, family=args.family)
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(int(tok) for tok in args.seeds.split(",")))
    if args.provider:
        cfg = replace(cfg, provider=args.provider)
    if args.instruction is not None:
        cfg = replace(cfg, instruction=args.instruction)
    if args.output:
        cfg = replace(cfg, output_dir=args.output)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    outcomes = []
    for seed in cfg.seeds:
        if cfg.family == "narrow":
            world = narrow_road_world(seed, cfg.vehicle)
            providers = {v.cid: make_provider(cfg) for v in world.controlled}
            result = run_joint_episode(world, providers,
                                       oracle_coordinator(world.road.bays),
                                       family="narrow", seed=seed,
                                       solver_config=cfg.solver, runtime_config=cfg.runtime,
                                       pool=cfg.pool, discretization=cfg.discretization)
            records = result.records
            outcome = result.outcome
        else:
            _, world = generate_scenario(cfg.family, seed, cfg.vehicle)
            provider = make_provider(cfg)
            result = run_episode(world, provider, cfg.family, seed,
                                 solver_config=cfg.solver, runtime_config=cfg.runtime,
                                 pool=cfg.pool, discretization=cfg.discretization,
                                 instruction=cfg.instruction or None)
            records = result.records
            outcome = result.outcome
        path = _episode_path(out, cfg.family, seed)
        write_jsonl(path, records)
        files.append(path.name)
        outcomes.append(outcome)
        print(f"{cfg.family} seed {seed}: {outcome} ({result.duration:.1f} s)")

    manifest = {"schema": 1, "family": cfg.family, "provider": cfg.provider,
                "seeds": list(cfg.seeds), "files": files,
                "config": serialize_config(cfg)}
    (out / "manifest.json").write_text(canonical(manifest) + "\n", encoding="utf-8")
    print(f"wrote {len(files)} episode logs to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    logdir = Path(args.logdir)
    manifest_path = logdir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest in {logdir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    cfg = MetricsConfig(d_0=args.d0, a_0=args.a0, penalty_variant=args.variant)
    episodes = []
    for name in manifest["files"]:
        episodes.append(read_jsonl(logdir / name))
    report = aggregate_suite(episodes, cfg, expected_seeds=manifest["seeds"])
    csv_text = report_csv(report)
    (logdir / "report.csv").write_text(csv_text, encoding="utf-8")
    (logdir / "report.json").write_text(canonical(report_json(report)) + "\n",
                                        encoding="utf-8")
    sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_replay(args) -> int:
    records = read_jsonl(args.logfile)
    if not records or records[0].get("type") != "header":
        raise LogFormatError("log has no header record", 1)
    head = records[0]
    print(f"episode {head.get('family')}/{head.get('seed')} "
          f"provider={head.get('provider')} map={head.get('map')}")
    emergency_active = False
    for record in records[1:]:
        kind = record.get("type")
        if kind == "decision":
            tag = "EMERGENCY " if record.get("emergency") else ""
            print(f"[{record['t_active']:8.2f}] {tag}decision #{record['id']} "
                  f"({record.get('provider')}): {record.get('rationale')}")
        elif kind == "coordination":
            cmd = record.get("command", {})
            print(f"[{record['t']:8.2f}] coordination: {cmd.get('directives')} "
                  f"- {cmd.get('rationale')}")
        elif kind == "tick":
            if record.get("emergency") and not emergency_active:
                print(f"[{record['t']:8.2f}] emergency pre-evaluation raised")
            emergency_active = bool(record.get("emergency"))
            if record.get("fallback"):
                print(f"[{record['t']:8.2f}] fallback action: {record['fallback']}")
        elif kind == "summary":
            print(f"[{record['duration']:8.2f}] outcome: {record['outcome']}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    if args.action != "list":
        raise ConfigError(f"unknown scenarios action {args.action!r}")
    suites = load_suite_manifest()
    for family in FAMILIES:
        seeds = suites.get(family, [])
        road = load_preset(family)
        print(f"{family}: {len(road.lanes)} lanes, {len(road.signals)} signals, "
              f"{len(seeds)} suite seeds")
    print("narrow: 2 lanes, coordination demo (run with --family narrow)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="guidedmpc",
                     description="decision-guided MPC driving experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run episode suites")
    p_run.add_argument("--config", help="INI run configuration")
    p_run.add_argument("--family", choices=FAMILIES + ("narrow",))
    p_run.add_argument("--seeds", help="comma-separated seed list override")
    p_run.add_argument("--provider", choices=("baseline", "oracle", "llm", "scripted"))
    p_run.add_argument("--instruction", help="driving-style instruction text")
    p_run.add_argument("--output", help="output directory override")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="aggregate a log directory into a report")
    p_eval.add_argument("logdir")
    p_eval.add_argument("--variant", choices=("as_written", "intent"), default="as_written")
    p_eval.add_argument("--d0", type=float, default=10.0)
    p_eval.add_argument("--a0", type=float, default=0.0)
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="render an episode log as a timeline")
    p_replay.add_argument("logfile")
    p_replay.set_defaults(func=cmd_replay)

    p_sc = sub.add_parser("scenarios", help="scenario utilities")
    p_sc.add_argument("action", choices=("list",))
    p_sc.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LogFormatError as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
