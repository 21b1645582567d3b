"""Evaluation metrics over episode tick logs and suite-level aggregation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .logs import iter_records, summary_of

OC_WEIGHTS = (1.0, 1.5, 15.0, 20.0)   # inefficiency, time, accel penalty, distance penalty
VARIANTS = ("as_written", "intent")


@dataclass(frozen=True)
class MetricsConfig:
    d_0: float = 10.0                  # clearance threshold, m
    a_0: float = 0.0                   # deceleration cutoff, m/s^2
    penalty_variant: str = "as_written"

    def __post_init__(self):
        if self.d_0 <= 0:
            raise ValueError("d_0 must be positive")
        if self.penalty_variant not in VARIANTS:
            raise ValueError(f"unknown penalty variant {self.penalty_variant!r}")


@dataclass(frozen=True)
class MetricsReport:
    collisions: int
    fails: int
    ineff: float
    time: float
    p_acc: float
    p_dist: float
    overall_cost: float

    def __post_init__(self):
        expect = overall_cost(self.ineff, self.time, self.p_acc, self.p_dist)
        if abs(self.overall_cost - expect) > 0.05:
            raise ValueError("overall cost inconsistent with its components")

    def row(self) -> tuple:
        return (self.collisions, self.fails, round(self.ineff, 2), round(self.time, 2),
                round(self.p_acc, 2), round(self.p_dist, 2), round(self.overall_cost, 2))


@dataclass(frozen=True)
class EpisodeMetrics:
    seed: int
    outcome: str
    duration: float
    ineff: float          # time-integrated lead-vehicle speed deficit, deficit-seconds
    ineff_samples: int
    p_acc: float          # per-tick normalized
    p_dist: float


def _step(x: float) -> float:
    return 1.0 if x > 0.0 else 0.0


def episode_metrics(records: Sequence[dict], cfg: MetricsConfig) -> EpisodeMetrics:
    summary = summary_of(records)
    dt = 0.1
    n_participants = 0
    for rec in records:
        if rec.get("type") == "header":
            dt = float(rec.get("control_period", 0.1))
            n_participants = int(rec.get("n_participants", 0))
            break
    acc_sum = 0.0
    dist_sum = 0.0
    ineff_sum = 0.0
    ineff_n = 0
    n_ticks = 0
    seen: set = set()
    for tick in iter_records(records, "tick"):
        n_ticks += 1
        ego_v = float(tick["ego"][2]) if "ego" in tick else 1.0
        for entry in tick.get("surround", ()):
            d = float(entry["d"])
            a = float(entry["a"])
            seen.add(entry["id"])
            # standing queues are not a proximity hazard: skip penalty samples
            # where both the ego and the other vehicle are stopped
            moving_pair = ego_v >= 0.5 or float(entry["v"]) >= 0.5
            if moving_pair and d <= 25.0:
                if cfg.penalty_variant == "as_written":
                    acc_sum += max(d - cfg.d_0, 0.0)
                    dist_sum += d * _step(cfg.a_0 - a)
                else:
                    dist_sum += max(cfg.d_0 - d, 0.0)
                    acc_sum += max(cfg.a_0 - a, 0.0)
            if entry.get("lead") and not entry.get("red"):
                ineff_sum += max(float(entry["v_max"]) - float(entry["v"]), 0.0) * dt
                ineff_n += 1
    n = max(n_ticks, 1)
    denom = max(n_participants or len(seen), 1)
    return EpisodeMetrics(seed=int(summary.get("seed", -1)), outcome=summary["outcome"],
                          duration=float(summary["duration"]),
                          ineff=ineff_sum / denom, ineff_samples=ineff_n,
                          p_acc=acc_sum / n, p_dist=dist_sum / n)


def inefficiency(episode_logs: Sequence[Sequence[dict]],
                 cfg: MetricsConfig | None = None) -> float:
    """Suite inefficiency: per episode, the time-integrated speed deficit of
    every ego-affected convoy lead (red-light stops excluded) normalized by the
    participant count, then averaged over episodes."""
    cfg = cfg or MetricsConfig()
    per = [episode_metrics(records, cfg).ineff for records in episode_logs]
    return sum(per) / len(per) if per else 0.0


def penalties(episode_logs: Sequence[Sequence[dict]],
              cfg: MetricsConfig | None = None) -> tuple[float, float]:
    """Suite (p_acc, p_dist), per-episode tick-normalized then averaged."""
    cfg = cfg or MetricsConfig()
    ms = [episode_metrics(records, cfg) for records in episode_logs]
    if not ms:
        return 0.0, 0.0
    return (sum(m.p_acc for m in ms) / len(ms), sum(m.p_dist for m in ms) / len(ms))


def overall_cost(ineff: float, time: float, p_acc: float, p_dist: float) -> float:
    w = OC_WEIGHTS
    return w[0] * ineff + w[1] * time + w[2] * p_acc + w[3] * p_dist


class IncompleteSuiteError(ValueError):
    def __init__(self, missing: Sequence[int]):
        super().__init__(f"suite incomplete, missing seeds: {sorted(missing)}")
        self.missing = tuple(sorted(missing))


def aggregate_suite(episode_logs: Sequence[Sequence[dict]],
                    cfg: MetricsConfig | None = None,
                    expected_seeds: Sequence[int] | None = None) -> MetricsReport:
    """Suite report: collision/timeout counts, mean success time, penalty means."""
    cfg = cfg or MetricsConfig()
    ms = [episode_metrics(records, cfg) for records in episode_logs]
    if expected_seeds is not None:
        missing = set(expected_seeds) - {m.seed for m in ms}
        if missing:
            raise IncompleteSuiteError(sorted(missing))
    if not ms:
        raise ValueError("no episodes to aggregate")
    collisions = sum(1 for m in ms if m.outcome == "collision")
    fails = sum(1 for m in ms if m.outcome == "timeout")
    succ = [m.duration for m in ms if m.outcome == "reached_goal"]
    time = sum(succ) / len(succ) if succ else 0.0
    ineff = sum(m.ineff for m in ms) / len(ms)
    p_acc = sum(m.p_acc for m in ms) / len(ms)
    p_dist = sum(m.p_dist for m in ms) / len(ms)
    return MetricsReport(collisions=collisions, fails=fails, ineff=ineff, time=time,
                         p_acc=p_acc, p_dist=p_dist,
                         overall_cost=overall_cost(ineff, time, p_acc, p_dist))


CSV_COLUMNS = ("Col.", "Fail", "Ineff", "Time", "Acc", "Dist", "O.C.")


def report_csv(report: MetricsReport) -> str:
    header = ",".join(CSV_COLUMNS)
    row = ",".join(str(v) for v in report.row())
    return f"{header}\n{row}\n"


def report_json(report: MetricsReport) -> dict:
    return {"collisions": report.collisions, "fails": report.fails,
            "ineff": round(report.ineff, 4), "time": round(report.time, 4),
            "p_acc": round(report.p_acc, 4), "p_dist": round(report.p_dist, 4),
            "overall_cost": round(report.overall_cost, 4)}
