"""Dual-frequency episode loop: low-frequency decisions latched across
high-frequency control ticks, with a rule-based emergency fast path."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bezier import (NoReferenceError, candidate_for_lane, generate_candidates,
                     sample_reference)
from .controller import SolveResult, SolverConfig, SolverDivergenceError, solve
from .decision import Decision, Guidance, compose_weights, format_decision, interval_midpoint
from .dynamics import Action, VehicleParams, VehicleState
from .geometry import wrap_angle
from .logs import SCHEMA_VERSION, rounded
from .observation import AttentionMask, ObservationBundle, assemble
from .providers import DecisionView, baseline_decision, heading_closest
from .weights import (ActionBias, ActionDiscretization, WeightPool, default_discretization,
                      default_weight_pool)
from .world import ControlledVehicle, World


@dataclass(frozen=True)
class RuntimeConfig:
    control_period: float = 0.1
    decision_period: float = 2.5            # matches the modeled inference delay scale
    emergency_decision_period: float = 1.5
    emergency_ttc_threshold: float = 2.0
    episode_timeout: float = 200.0
    decision_latency: float = 0.0           # modeled provider delay, simulation time
    emergency_latency: float = 0.0
    fast_path_enabled: bool = True
    sensing_range: float = 80.0
    metrics_range: float = 25.0             # surround logging radius for the metric suite
    validity_factor: float = 2.0            # decision validity = factor * decision_period

    def __post_init__(self):
        if not 0 < self.control_period < self.decision_period:
            raise ValueError("control period must be positive and below the decision period")
        if min(self.emergency_decision_period, self.emergency_ttc_threshold,
               self.episode_timeout, self.validity_factor) <= 0:
            raise ValueError("runtime periods must be positive")

    @property
    def validity(self) -> float:
        return self.validity_factor * self.decision_period


def time_to_collision(gap: float, closing_speed: float) -> float:
    """Bumper gap over closing speed; infinite when not closing."""
    if closing_speed <= 1e-9:
        return math.inf
    return gap / closing_speed


def pre_evaluate_emergency(world: World, ego: ControlledVehicle | None = None,
                           ttc_threshold: float = 2.0,
                           corridor_margin: float = 0.5) -> tuple[bool, str]:
    """Rule-based check: closing on something in the heading corridor, or a
    stationary obstacle inside the braking envelope. Pure function of the world."""
    ego = ego or world.controlled[0]
    ex, ey, ev = ego.state.x, ego.state.y, ego.state.v
    cos_h, sin_h = math.cos(ego.state.psi), math.sin(ego.state.psi)
    brake_envelope = ev * ev / (2.0 * abs(ego.params.a_min) * 0.85) + 2.0

    entities: list[tuple[float, float, float, float, float, float, str]] = []
    for p in world.participants:
        if p.done:
            continue
        pos = p.position()
        entities.append((float(pos[0]), float(pos[1]), p.v, p.heading(), *p.dims, str(p.id)))
    for c in world.controlled:
        if c.cid != ego.cid:
            entities.append((c.state.x, c.state.y, c.state.v, c.state.psi,
                             c.length, c.width, f"vehicle {c.track_id}"))

    corridor = ego.width / 2.0 + corridor_margin
    for x, y, v, heading, length, width, label in entities:
        dx, dy = x - ex, y - ey
        longitudinal = dx * cos_h + dy * sin_h
        lateral = -dx * sin_h + dy * cos_h
        if longitudinal <= 0 or abs(lateral) > corridor + width / 2.0:
            continue
        gap = longitudinal - (ego.length + length) / 2.0
        if gap <= 0:
            return True, f"overlap with {label}"
        rel = wrap_angle(heading - ego.state.psi)
        closing = ev - v * math.cos(rel)
        ttc = time_to_collision(gap, closing)
        if ttc < ttc_threshold:
            # crossing traffic clears the corridor before impact; only flag
            # entities still laterally in the way at the projected impact time
            lateral_at_hit = lateral + v * math.sin(rel) * ttc
            if abs(lateral_at_hit) <= corridor + width / 2.0:
                return True, f"closing on {label}, ttc below threshold"
        if v < 0.3 and gap < brake_envelope:
            return True, f"stationary obstacle {label} inside braking envelope"
    return False, ""


@dataclass
class _Latched:
    decision: Decision
    decision_id: int
    activated_at: float
    weights: object
    bias: ActionBias
    mask_by_id: dict[int, int]
    ego_lane: str | None
    participant_lanes: dict[int, str | None]


@dataclass
class _Pending:
    ready_at: float
    decision: Decision
    view: DecisionView            # request-time view; selections resolve against it
    emergency: bool
    requested_at: float


class VehiclePipeline:
    """Decision latching, solving, and logging for one controlled vehicle."""

    def __init__(self, vehicle: ControlledVehicle, provider, family: str,
                 solver_config: SolverConfig, runtime_config: RuntimeConfig,
                 pool: WeightPool, discretization: ActionDiscretization,
                 seed: int, instruction: str | None = None,
                 collect_traces: bool = False):
        self.vehicle = vehicle
        self.provider = provider
        self.family = family
        self.scfg = solver_config
        self.rcfg = runtime_config
        self.pool = pool
        self.disc = discretization
        self.seed = seed
        self.instruction = instruction
        self.collect_traces = collect_traces
        self.latched: _Latched | None = None
        self.pending: _Pending | None = None
        self.next_full_at = 0.0
        self.next_emergency_at = 0.0
        self.warm_start: np.ndarray | None = None
        self.prev_action: Action | None = None
        self.decision_seq = 0
        self.records: list[dict] = []
        self.traces: list[tuple[float, ...]] = []
        self._candidate_cache: dict = {}

    # -- view assembly

    def _build_view(self, world: World, emergency_reason: str = "") -> DecisionView:
        static_obs = world.static_observation()
        tracks = world.tracks_for(self.vehicle, self.rcfg.sensing_range)
        candidates = {"ego": generate_candidates(static_obs, self.vehicle.state,
                                                 self.rcfg.sensing_range)}
        for track in tracks:
            cur = track.current
            pstate = VehicleState(cur.x, cur.y, cur.v, cur.heading, 0.0)
            candidates[track.id] = generate_candidates(static_obs, pstate,
                                                       self.rcfg.sensing_range)
        goal = self.vehicle.goal
        goal_center = (sum(p[0] for p in goal) / len(goal),
                       sum(p[1] for p in goal) / len(goal)) if goal else None
        return DecisionView(
            timestamp=world.time, family=self.family, ego_state=self.vehicle.state,
            ego_v_max=self.vehicle.v_max, ego_lane_id=candidates["ego"][0].lane_id,
            static_obs=static_obs, tracks=tracks, candidates=candidates,
            pool_sizes=self.pool.sizes(), bins=(self.disc.accel_bins, self.disc.steer_bins),
            validity=self.rcfg.validity, instruction=self.instruction,
            prev_decision=self.latched.decision if self.latched else None,
            emergency_reason=emergency_reason, ego_goal=goal_center)

    # -- decision management

    def _activate(self, decision: Decision, view: DecisionView, t: float, emergency: bool):
        self.decision_seq += 1
        weights = compose_weights(self.pool, decision.weight_selection)
        bias = interval_midpoint(self.disc, decision.bias_selection)
        mask = decision.mask_by_id()
        ego_cands = view.candidates["ego"]
        ego_lane = ego_cands[decision.ego_trajectory_index].lane_id
        participant_lanes: dict[int, str | None] = {}
        for pid, idx in decision.participant_trajectory_indices.items():
            cands = view.candidates.get(pid)
            participant_lanes[pid] = cands[idx].lane_id if cands else None
        self.latched = _Latched(decision=decision, decision_id=self.decision_seq,
                                activated_at=t, weights=weights, bias=bias,
                                mask_by_id=mask, ego_lane=ego_lane,
                                participant_lanes=participant_lanes)
        self.records.append({
            "type": "decision", "vehicle": self.vehicle.track_id, "id": self.decision_seq,
            "t_request": rounded(decision.issued_at), "t_active": rounded(t),
            "emergency": emergency, "text": format_decision(decision, scene=not emergency),
            "rationale": decision.rationale_text, "provider": getattr(self.provider, "name", "?")})

    def _compose_emergency(self, guidance: Guidance, view: DecisionView) -> Decision:
        """Fast-path packet: provider guidance plus the previous mask and
        baseline participant predictions (scenario encoding is skipped)."""
        base = baseline_decision(view)
        prev_mask = self.latched.mask_by_id if self.latched else {}
        ids = sorted(base.participant_trajectory_indices)
        bits = tuple(prev_mask.get(pid, 1) for pid in ids)
        ego_idx = base.ego_trajectory_index
        if self.latched and self.latched.ego_lane is not None:
            for k, cand in enumerate(view.candidates["ego"]):
                if cand.lane_id == self.latched.ego_lane and not cand.is_duplicate:
                    ego_idx = k
                    break
        return Decision(ego_trajectory_index=ego_idx,
                        participant_trajectory_indices=base.participant_trajectory_indices,
                        attention_mask=AttentionMask(bits),
                        bias_selection=guidance.bias_selection,
                        weight_selection=guidance.weight_selection,
                        rationale_text=guidance.rationale_text,
                        issued_at=view.timestamp, validity=view.validity, emergency=True)

    def maybe_refresh(self, world: World, emergency_now: bool, emergency_reason: str,
                      adjust: Callable[[Decision, DecisionView], Decision] | None = None):
        t = world.time
        eps = 1e-9   # accumulated tick time may sit an ulp below cadence marks
        if self.pending is not None and t >= self.pending.ready_at - eps:
            self._activate(self.pending.decision, self.pending.view, t,
                           self.pending.emergency)
            self.pending = None

        if self.pending is None:
            if emergency_now and self.rcfg.fast_path_enabled \
                    and t >= self.next_emergency_at - eps:
                view = self._build_view(world, emergency_reason)
                guidance = self.provider.decide_emergency(view)
                if guidance is not None:
                    decision = self._compose_emergency(guidance, view)
                    self._queue(decision, view, t, self.rcfg.emergency_latency, True)
                self.next_emergency_at = t + self.rcfg.emergency_decision_period
                self.next_full_at = max(self.next_full_at, t + self.rcfg.control_period)
            elif not emergency_now and t >= self.next_full_at - eps:
                view = self._build_view(world)
                decision = self.provider.decide(view)
                if decision is not None and adjust is not None:
                    decision = adjust(decision, view)
                if decision is not None:
                    self._queue(decision, view, t, self.rcfg.decision_latency, False)
                self.next_full_at = t + self.rcfg.decision_period

        # soft-constraint guarantee: never run without a usable decision
        if self.latched is None \
                or (t - self.latched.activated_at) > self.latched.decision.validity + eps:
            view = self._build_view(world)
            self._activate(baseline_decision(view), view, t, False)

    def _queue(self, decision: Decision, view: DecisionView, t: float,
               latency: float, emergency: bool):
        if latency <= 0:
            self._activate(decision, view, t, emergency)
        else:
            self.pending = _Pending(ready_at=t + latency, decision=decision, view=view,
                                    emergency=emergency, requested_at=t)

    # -- control

    def _masked_bundle(self, world: World) -> ObservationBundle:
        static_obs = world.static_observation()
        tracks = world.tracks_for(self.vehicle, self.rcfg.sensing_range)
        latch = self.latched
        enriched = []
        bits = []
        for track in tracks:
            bit = latch.mask_by_id.get(track.id, 1)
            bits.append(bit)
            if not bit:
                enriched.append(track)
                continue
            lane_id = latch.participant_lanes.get(track.id)
            cur = track.current
            pstate = VehicleState(cur.x, cur.y, cur.v, cur.heading, 0.0)
            try:
                if lane_id is None:
                    cands = generate_candidates(static_obs, pstate, self.rcfg.sensing_range)
                    poly = cands[heading_closest(cands, cur.heading)]
                else:
                    poly = candidate_for_lane(static_obs, pstate, lane_id,
                                              self.rcfg.sensing_range)
                flat = tuple(float(c) for xy in poly.points for c in xy)
            except (NoReferenceError, KeyError):
                flat = ()
            enriched.append(replace(track, predicted=flat))
        return assemble(static_obs, enriched, AttentionMask(tuple(bits)), world.time)

    def control(self, world: World) -> tuple[Action, dict]:
        t = world.time
        latch = self.latched
        static_obs = world.static_observation()
        try:
            if latch.ego_lane is not None:
                polygon = candidate_for_lane(static_obs, self.vehicle.state, latch.ego_lane,
                                             self.rcfg.sensing_range)
            else:
                polygon = generate_candidates(static_obs, self.vehicle.state,
                                              self.rcfg.sensing_range)[0]
        except (NoReferenceError, KeyError):
            action = Action(self.vehicle.params.a_min, 0.0)
            return action, {"fallback": "no_reference", "cost": None}
        reference = sample_reference(polygon, self.vehicle.v_max, self.scfg.horizon,
                                     self.vehicle.params.dt,
                                     wheelbase=self.vehicle.params.wheelbase,
                                     resolution=512)   # lane curves are smooth
        bundle = self._masked_bundle(world)
        tick_seed = (self.seed * 1000003 + int(round(t / self.rcfg.control_period))) % (2 ** 63)
        try:
            result: SolveResult = solve(self.vehicle.state, reference, bundle, latch.bias,
                                        latch.weights, self.scfg,
                                        params=self.vehicle.params,
                                        warm_start=self.warm_start,
                                        prev_action=self.prev_action, seed=tick_seed)
        except SolverDivergenceError:
            action = Action(self.vehicle.params.a_min, 0.0)
            self.warm_start = None
            self.prev_action = action
            return action, {"fallback": "divergent", "cost": None}
        if self.collect_traces:
            self.traces.append(result.cost_trace)
        self.warm_start = result.planned_actions
        self.prev_action = result.first_action
        b = result.breakdown
        info = {"fallback": None,
                "cost": {"trk": rounded(b.c_trk), "act": rounded(b.c_act),
                         "saf": rounded(b.c_saf), "total": rounded(b.total)}}
        return result.first_action, info


@dataclass
class EpisodeResult:
    outcome: str                       # reached_goal | collision | timeout
    duration: float
    records: list[dict]
    collision_pair: tuple[int, int] | None = None
    solver_traces: list[tuple[float, ...]] = field(default_factory=list)


def _surround_record(world: World, ego: ControlledVehicle, metrics_range: float) -> list:
    """Vehicles near the ego plus every ego-affected convoy lead (within 100 m),
    with the fields the metric suite folds over."""
    ex, ey = ego.state.x, ego.state.y
    surround = []
    for p in world.participants:
        if p.done or p.kind == "pedestrian":
            continue
        pos = p.position()
        d = math.hypot(float(pos[0]) - ex, float(pos[1]) - ey)
        if d <= metrics_range or (p.ego_affected and d <= 100.0):
            surround.append({"id": p.id, "kind": p.kind, "d": rounded(d),
                             "a": rounded(p.accel), "v": rounded(p.v),
                             "v_max": rounded(p.v_max), "red": p.at_red,
                             "lead": p.ego_affected})
    return surround


def run_episode(world: World, provider, family: str, seed: int,
                solver_config: SolverConfig | None = None,
                runtime_config: RuntimeConfig | None = None,
                pool: WeightPool | None = None,
                discretization: ActionDiscretization | None = None,
                instruction: str | None = None,
                collect_traces: bool = False) -> EpisodeResult:
    """Single-vehicle episode: deterministic given (world spec, seed, configs)."""
    scfg = solver_config or SolverConfig()
    rcfg = runtime_config or RuntimeConfig()
    pool = pool or default_weight_pool()
    disc = discretization or default_discretization()
    ego = world.controlled[0]
    pipeline = VehiclePipeline(ego, provider, family, scfg, rcfg, pool, disc, seed,
                               instruction, collect_traces)
    records: list[dict] = [{
        "type": "header", "schema": SCHEMA_VERSION, "family": family, "seed": seed,
        "provider": getattr(provider, "name", "?"), "map": world.road.name,
        "control_period": rcfg.control_period, "decision_period": rcfg.decision_period,
        "n_participants": len(world.participants)}]

    outcome = "timeout"
    collision_pair = None
    n_ticks = int(round(rcfg.episode_timeout / rcfg.control_period))
    duration = rcfg.episode_timeout
    for _ in range(n_ticks):
        t = world.time
        emergency_now, reason = pre_evaluate_emergency(
            world, ego, rcfg.emergency_ttc_threshold)
        pipeline.maybe_refresh(world, emergency_now, reason)
        action, info = pipeline.control(world)
        latch = pipeline.latched
        surround = _surround_record(world, ego, rcfg.metrics_range)
        records.extend(pipeline.records)
        pipeline.records.clear()
        records.append({
            "type": "tick", "t": rounded(t),
            "ego": [rounded(ego.state.x), rounded(ego.state.y), rounded(ego.state.v),
                    rounded(ego.state.psi), rounded(ego.state.theta)],
            "action": [rounded(action.a), rounded(action.theta_cmd)],
            "cost": info["cost"], "fallback": info["fallback"],
            "decision_id": latch.decision_id,
            "decision_age": rounded(t - latch.activated_at),
            "emergency": emergency_now,
            "surround": surround})
        world.step({ego.cid: action}, rcfg.control_period)
        pair = world.detect_collision()
        if pair is not None:
            outcome = "collision"
            collision_pair = pair
            duration = world.time
            break
        if world.check_goal(ego):
            outcome = "reached_goal"
            duration = world.time
            break
    records.extend(pipeline.records)
    pipeline.records.clear()
    records.append({"type": "summary", "outcome": outcome, "duration": rounded(duration),
                    "collision": list(collision_pair) if collision_pair else None,
                    "family": family, "seed": seed})
    return EpisodeResult(outcome=outcome, duration=duration, records=records,
                         collision_pair=collision_pair,
                         solver_traces=pipeline.traces)
