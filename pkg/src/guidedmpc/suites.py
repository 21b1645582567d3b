"""Suite execution helpers: run seed batches per family/provider and aggregate reports."""
from __future__ import annotations

from dataclasses import dataclass, field

from .controller import SolverConfig
from .dynamics import VehicleParams
from .metrics import MetricsConfig, MetricsReport, aggregate_suite
from .providers import (AblationProvider, BaselineProvider, OracleProvider, OracleRulebook)
from .runtime import RuntimeConfig, run_episode
from .scenarios import generate_scenario

# tuned for desk-scale suite runs; the solver contract is unchanged
SUITE_SOLVER = SolverConfig(horizon=30, iterations=40, restarts=0)
SUITE_RUNTIME = RuntimeConfig()


@dataclass
class SuiteResult:
    family: str
    provider: str
    episodes: list = field(default_factory=list)     # EpisodeResult per seed
    logs: list = field(default_factory=list)         # record lists per seed

    @property
    def collisions(self) -> int:
        return sum(1 for e in self.episodes if e.outcome == "collision")

    def report(self, cfg: MetricsConfig | None = None) -> MetricsReport:
        return aggregate_suite(self.logs, cfg or MetricsConfig())


def provider_for(kind: str, family: str, use_encoder: bool = True,
                 use_guidance: bool = True):
    if kind == "baseline":
        return BaselineProvider()
    if kind == "oracle":
        oracle = OracleProvider(OracleRulebook(family=family))
        if use_encoder and use_guidance:
            return oracle
        return AblationProvider(oracle, use_encoder, use_guidance)
    raise ValueError(f"suite provider must be baseline or oracle, got {kind!r}")


def run_suite(family: str, seeds, kind: str = "oracle",
              solver: SolverConfig | None = None,
              runtime: RuntimeConfig | None = None,
              params: VehicleParams | None = None,
              use_encoder: bool = True, use_guidance: bool = True,
              instruction: str | None = None) -> SuiteResult:
    solver = solver or SUITE_SOLVER
    runtime = runtime or SUITE_RUNTIME
    result = SuiteResult(family=family, provider=kind)
    for seed in seeds:
        _, world = generate_scenario(family, seed, params)
        provider = provider_for(kind, family, use_encoder, use_guidance)
        episode = run_episode(world, provider, family, seed, solver_config=solver,
                              runtime_config=runtime, instruction=instruction)
        result.episodes.append(episode)
        result.logs.append(episode.records)
    return result
