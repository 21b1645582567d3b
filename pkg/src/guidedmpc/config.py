"""Declarative run configuration: plain-text INI with sections per subsystem."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

from .controller import SolverConfig
from .dynamics import VehicleParams
from .metrics import MetricsConfig
from .roads import MapFormatError, load_preset
from .runtime import RuntimeConfig
from .weights import (ActionDiscretization, ActionLevel, SafetyLevel, SmoothnessLevel,
                      TrackingLevel, WeightPool, default_discretization,
                      default_weight_pool)

PROVIDERS = ("baseline", "oracle", "llm", "scripted")
FAMILIES = ("si", "usi", "lane", "rab", "eoa", "narrow")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    family: str = "lane"
    seeds: tuple[int, ...] = (1,)
    provider: str = "baseline"
    output_dir: str = "runs/out"
    instruction: str = ""
    scripted_path: str = ""
    llm_model: str = "gpt-3.5-turbo"
    llm_timeout: float = 10.0
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    pool: WeightPool = field(default_factory=default_weight_pool)
    discretization: ActionDiscretization = field(default_factory=default_discretization)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown scenario family {self.family!r}")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"unknown provider {self.provider!r}")
        try:
            load_preset(self.family)
        except MapFormatError as exc:
            raise ConfigError(str(exc)) from exc


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split())


def _pair(vals: tuple[float, ...], what: str) -> tuple[float, float]:
    if len(vals) != 2:
        raise ConfigError(f"{what} expects 2 values")
    return (vals[0], vals[1])


def serialize_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp["run"] = {
        "family": cfg.family,
        "seeds": " ".join(str(s) for s in cfg.seeds),
        "provider": cfg.provider,
        "output_dir": cfg.output_dir,
        "instruction": cfg.instruction,
        "scripted_path": cfg.scripted_path,
    }
    cp["llm"] = {"model": cfg.llm_model, "timeout": repr(cfg.llm_timeout)}
    v = cfg.vehicle
    cp["vehicle"] = {"wheelbase": repr(v.wheelbase), "theta_max": repr(v.theta_max),
                     "a_min": repr(v.a_min), "a_max": repr(v.a_max),
                     "steering_rate_max": repr(v.steering_rate_max)}
    s = cfg.solver
    cp["solver"] = {"horizon": str(s.horizon), "iterations": str(s.iterations),
                    "tolerance": repr(s.tolerance), "restarts": str(s.restarts),
                    "fd_epsilon": repr(s.fd_epsilon),
                    "one_sided_safety": str(s.one_sided_safety).lower()}
    r = cfg.runtime
    cp["runtime"] = {
        "control_period": repr(r.control_period), "decision_period": repr(r.decision_period),
        "emergency_decision_period": repr(r.emergency_decision_period),
        "emergency_ttc_threshold": repr(r.emergency_ttc_threshold),
        "episode_timeout": repr(r.episode_timeout),
        "decision_latency": repr(r.decision_latency),
        "emergency_latency": repr(r.emergency_latency),
        "fast_path_enabled": str(r.fast_path_enabled).lower(),
        "sensing_range": repr(r.sensing_range), "metrics_range": repr(r.metrics_range),
        "validity_factor": repr(r.validity_factor)}
    m = cfg.metrics
    cp["metrics"] = {"d_0": repr(m.d_0), "a_0": repr(m.a_0),
                     "penalty_variant": m.penalty_variant}
    w: dict[str, str] = {}
    for level in cfg.pool.tracking:
        w[f"tracking_{level.name}"] = " ".join(
            repr(x) for x in (*level.w_x, *level.w_v, *level.w_theta))
    for level in cfg.pool.action:
        w[f"action_{level.name}"] = " ".join(repr(x) for x in level.w_s)
    for level in cfg.pool.smoothness:
        w[f"smoothness_{level.name}"] = " ".join(repr(x) for x in (*level.w_g, *level.w_l))
    for level in cfg.pool.safety:
        w[f"safety_{level.name}"] = f"{level.w_saf!r} {level.d_hat!r}"
    cp["weights"] = w
    cp["actions"] = {
        "accel_edges": " ".join(repr(x) for x in cfg.discretization.accel_edges),
        "steer_edges": " ".join(repr(x) for x in cfg.discretization.steer_edges)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    try:
        run = cp["run"]
        family = run.get("family", "lane")
        seeds = tuple(int(tok) for tok in run.get("seeds", "1").split())
        provider = run.get("provider", "baseline")
        output_dir = run.get("output_dir", "runs/out")
        instruction = run.get("instruction", "")
        scripted_path = run.get("scripted_path", "")

        llm = cp["llm"] if cp.has_section("llm") else {}
        veh = cp["vehicle"] if cp.has_section("vehicle") else {}
        vehicle = VehicleParams(
            wheelbase=float(veh.get("wheelbase", 2.8)),
            dt=float(cp["runtime"].get("control_period", 0.1)) if cp.has_section("runtime") else 0.1,
            theta_max=float(veh.get("theta_max", math.pi / 4)),
            a_min=float(veh.get("a_min", -6.0)), a_max=float(veh.get("a_max", 3.0)),
            steering_rate_max=float(veh.get("steering_rate_max", 0.8)))

        sol = cp["solver"] if cp.has_section("solver") else {}
        solver = SolverConfig(
            horizon=int(sol.get("horizon", 30)), iterations=int(sol.get("iterations", 60)),
            tolerance=float(sol.get("tolerance", 1e-4)), restarts=int(sol.get("restarts", 4)),
            fd_epsilon=float(sol.get("fd_epsilon", 1e-3)),
            one_sided_safety=str(sol.get("one_sided_safety", "true")).lower() == "true")

        rt = cp["runtime"] if cp.has_section("runtime") else {}
        runtime = RuntimeConfig(
            control_period=float(rt.get("control_period", 0.1)),
            decision_period=float(rt.get("decision_period", 2.5)),
            emergency_decision_period=float(rt.get("emergency_decision_period", 1.5)),
            emergency_ttc_threshold=float(rt.get("emergency_ttc_threshold", 2.0)),
            episode_timeout=float(rt.get("episode_timeout", 200.0)),
            decision_latency=float(rt.get("decision_latency", 0.0)),
            emergency_latency=float(rt.get("emergency_latency", 0.0)),
            fast_path_enabled=str(rt.get("fast_path_enabled", "true")).lower() == "true",
            sensing_range=float(rt.get("sensing_range", 50.0)),
            metrics_range=float(rt.get("metrics_range", 25.0)),
            validity_factor=float(rt.get("validity_factor", 2.0)))

        met = cp["metrics"] if cp.has_section("metrics") else {}
        metrics = MetricsConfig(d_0=float(met.get("d_0", 10.0)),
                                a_0=float(met.get("a_0", 0.0)),
                                penalty_variant=met.get("penalty_variant", "as_written"))

        if cp.has_section("weights"):
            ws = cp["weights"]
            levels = ("low", "default", "high")
            tracking = []
            action = []
            smoothness = []
            safety = []
            for name in levels:
                tv = _floats(ws[f"tracking_{name}"])
                if len(tv) != 6:
                    raise ConfigError(f"tracking_{name} expects 6 values")
                tracking.append(TrackingLevel(name, (tv[0], tv[1]), (tv[2], tv[3]),
                                              (tv[4], tv[5])))
                action.append(ActionLevel(name, _pair(_floats(ws[f"action_{name}"]),
                                                      f"action_{name}")))
                sv = _floats(ws[f"smoothness_{name}"])
                if len(sv) != 4:
                    raise ConfigError(f"smoothness_{name} expects 4 values")
                smoothness.append(SmoothnessLevel(name, (sv[0], sv[1]), (sv[2], sv[3])))
                fv = _floats(ws[f"safety_{name}"])
                if len(fv) != 2:
                    raise ConfigError(f"safety_{name} expects 2 values")
                safety.append(SafetyLevel(name, fv[0], fv[1]))
            pool = WeightPool(tuple(tracking), tuple(action), tuple(smoothness),
                              tuple(safety))
        else:
            pool = default_weight_pool()

        if cp.has_section("actions"):
            disc = ActionDiscretization(
                accel_edges=_floats(cp["actions"]["accel_edges"]),
                steer_edges=_floats(cp["actions"]["steer_edges"]))
        else:
            disc = default_discretization()

        return RunConfig(family=family, seeds=seeds, provider=provider,
                         output_dir=output_dir, instruction=instruction,
                         scripted_path=scripted_path,
                         llm_model=llm.get("model", "gpt-3.5-turbo") if llm else "gpt-3.5-turbo",
                         llm_timeout=float(llm.get("timeout", 10.0)) if llm else 10.0,
                         vehicle=vehicle, solver=solver, runtime=runtime, metrics=metrics,
                         pool=pool, discretization=disc)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config: {exc}") from exc


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
