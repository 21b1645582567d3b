"""Multi-vehicle joint control: local statuses, a central coordinator issuing
yield/proceed directives, and the lockstep two-pipeline episode loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .decision import Decision
from .logs import SCHEMA_VERSION, rounded
from .providers import DecisionView
from .runtime import (EpisodeResult, RuntimeConfig, VehiclePipeline,
                      pre_evaluate_emergency, _surround_record)
from .controller import SolverConfig
from .weights import (ActionDiscretization, WeightPool, WeightSelection,
                      default_discretization, default_weight_pool)
from .world import ControlledVehicle, World

DIRECTIVES = ("proceed", "yield", "pull_aside")
STOP_ACCEL_INDEX = 1
STEER_CENTER_INDEX = 2


@dataclass(frozen=True)
class LocalStatus:
    vehicle_id: int
    x: float
    y: float
    speed: float
    path_summary: str
    blocking_conflict: bool
    note: str

    def as_record(self) -> dict:
        return {"vehicle": self.vehicle_id, "x": rounded(self.x), "y": rounded(self.y),
                "v": rounded(self.speed), "path": self.path_summary,
                "conflict": self.blocking_conflict, "note": self.note}


@dataclass(frozen=True)
class CoordinationCommand:
    directives: dict[int, str]
    rationale_text: str

    def __post_init__(self):
        for directive in self.directives.values():
            if directive not in DIRECTIVES:
                raise ValueError(f"unknown directive {directive!r}")

    def as_record(self) -> dict:
        return {"directives": {str(k): v for k, v in sorted(self.directives.items())},
                "rationale": self.rationale_text}


def _needs_zone(world: World, vehicle: ControlledVehicle) -> bool:
    zones = [z for z in world.road.zones if z.kind == "narrow"]
    if not zones:
        return False
    zone = zones[0]
    if zone.contains(vehicle.state.x, vehicle.state.y):
        return True
    dx = zone.center[0] - vehicle.state.x
    dy = zone.center[1] - vehicle.state.y
    ahead = dx * math.cos(vehicle.state.psi) + dy * math.sin(vehicle.state.psi)
    return ahead > 0 and math.hypot(dx, dy) < 90.0


def build_statuses(world: World) -> list[LocalStatus]:
    needs = {v.cid: _needs_zone(world, v) for v in world.controlled}
    statuses = []
    for v in world.controlled:
        conflict = needs[v.cid] and any(needs[o.cid] for o in world.controlled
                                        if o.cid != v.cid)
        note = "approaching the single-track section" if conflict else "clear"
        statuses.append(LocalStatus(
            vehicle_id=v.track_id, x=v.state.x, y=v.state.y, speed=v.state.v,
            path_summary=f"lane {v.lane_id} toward goal",
            blocking_conflict=conflict, note=note))
    return statuses


def conflict_pairs(statuses: Sequence[LocalStatus]) -> list[tuple[int, int]]:
    flagged = [s.vehicle_id for s in statuses if s.blocking_conflict]
    return [(a, b) for i, a in enumerate(flagged) for b in flagged[i + 1:]]


def all_yield(statuses: Sequence[LocalStatus], why: str) -> CoordinationCommand:
    return CoordinationCommand({s.vehicle_id: "yield" for s in statuses}, why)


def oracle_coordinator(bays: Sequence[tuple[float, float]],
                       zone=None) -> Callable[[Sequence[LocalStatus]], CoordinationCommand]:
    """Rule coordinator: in each conflict the vehicle nearer a passing bay yields.

    Two stateless stabilizers keep the assignment from oscillating as the pair
    moves: a vehicle already inside the single-track zone always proceeds, and a
    vehicle already waiting (stopped) keeps yielding to a moving one.
    """

    def bay_distance(s: LocalStatus) -> float:
        if not bays:
            return math.inf
        return min(math.hypot(s.x - bx, s.y - by) for bx, by in bays)

    def inside_zone(s: LocalStatus) -> bool:
        return zone is not None and zone.contains(s.x, s.y)

    def decide(statuses: Sequence[LocalStatus]) -> CoordinationCommand:
        directives = {s.vehicle_id: "proceed" for s in statuses}
        notes = []
        for a, b in conflict_pairs(statuses):
            sa = next(s for s in statuses if s.vehicle_id == a)
            sb = next(s for s in statuses if s.vehicle_id == b)
            if inside_zone(sa) != inside_zone(sb):
                yielder = b if inside_zone(sa) else a
                note = "committed vehicle clears the single-track section first"
            elif sa.speed < 1.5 and sb.speed > 3.0:
                yielder, note = a, "already waiting, keep yielding"
            elif sb.speed < 1.5 and sa.speed > 3.0:
                yielder, note = b, "already waiting, keep yielding"
            else:
                da, db = bay_distance(sa), bay_distance(sb)
                if da < db or (da == db and a > b):
                    yielder = a
                else:
                    yielder = b
                note = "the vehicle nearer a passing bay waits there"
            runner = b if yielder == a else a
            directives[yielder] = "yield"
            if directives[runner] != "yield":
                directives[runner] = "proceed"
            notes.append(f"{yielder}: {note}; {runner} crosses")
        return CoordinationCommand(directives, "; ".join(notes) or "no conflicts")

    return decide


def central_coordinate(statuses: Sequence[LocalStatus],
                       provider: Callable[[Sequence[LocalStatus]], CoordinationCommand]
                       ) -> CoordinationCommand:
    """Run the coordinator and enforce at-most-one-proceed per conflict pair;
    any provider failure or violation degrades to the all-yield safe command."""
    if len(statuses) < 2:
        raise ValueError("coordination needs at least two statuses")
    try:
        command = provider(statuses)
    except Exception:
        return all_yield(statuses, "coordinator failure: yield everywhere")
    missing = [s.vehicle_id for s in statuses if s.vehicle_id not in command.directives]
    if missing:
        return all_yield(statuses, f"command missing vehicles {missing}: yield everywhere")
    for a, b in conflict_pairs(statuses):
        if command.directives[a] == "proceed" and command.directives[b] == "proceed":
            return all_yield(statuses, "conflicting proceeds rejected: yield everywhere")
    return command


def _shoulder_index(view: DecisionView) -> int:
    best, best_off = None, -1.0
    for k, cand in enumerate(view.candidates["ego"]):
        if cand.is_duplicate:
            continue
        x1, y1 = cand.points[1]
        off = math.hypot(x1 - view.ego_state.x, y1 - view.ego_state.y)
        lat = abs(off * math.sin(math.atan2(y1 - view.ego_state.y, x1 - view.ego_state.x)
                                 - view.ego_state.psi))
        if lat > best_off:
            best, best_off = k, lat
    return best if best is not None else 0


def apply_command(command: CoordinationCommand, vehicle_id: int,
                  decision: Decision, view: DecisionView) -> Decision:
    """Map a directive onto a vehicle's pending decision."""
    directive = command.directives.get(vehicle_id, "yield")
    note = f"; coordinator: {directive} ({command.rationale_text})"
    if directive == "yield":
        return replace(decision,
                       bias_selection=(STOP_ACCEL_INDEX, STEER_CENTER_INDEX),
                       weight_selection=replace(decision.weight_selection,
                                                action=2, safety=2),
                       rationale_text=decision.rationale_text + note)
    if directive == "pull_aside":
        return replace(decision, ego_trajectory_index=_shoulder_index(view),
                       rationale_text=decision.rationale_text + note)
    return replace(decision, rationale_text=decision.rationale_text + note)


@dataclass
class JointEpisodeResult:
    outcome: str
    duration: float
    records: list[dict]
    per_vehicle: dict[int, str]
    collision_pair: tuple[int, int] | None = None


def run_joint_episode(world: World, providers: Mapping[int, object],
                      coordinator: Callable[[Sequence[LocalStatus]], CoordinationCommand],
                      family: str = "narrow", seed: int = 0,
                      solver_config: SolverConfig | None = None,
                      runtime_config: RuntimeConfig | None = None,
                      pool: WeightPool | None = None,
                      discretization: ActionDiscretization | None = None) -> JointEpisodeResult:
    """Lockstep multi-vehicle episode with a coordination round per decision period."""
    scfg = solver_config or SolverConfig()
    rcfg = runtime_config or RuntimeConfig()
    pool = pool or default_weight_pool()
    disc = discretization or default_discretization()

    pipelines = {
        v.cid: VehiclePipeline(v, providers[v.cid], family, scfg, rcfg, pool, disc,
                               seed * 7 + v.cid)
        for v in world.controlled
    }
    records: list[dict] = [{
        "type": "header", "schema": SCHEMA_VERSION, "family": family, "seed": seed,
        "provider": "coordinated", "map": world.road.name,
        "control_period": rcfg.control_period, "decision_period": rcfg.decision_period}]

    outcome = "timeout"
    collision_pair = None
    duration = rcfg.episode_timeout
    next_round = 0.0
    command: CoordinationCommand | None = None
    n_ticks = int(round(rcfg.episode_timeout / rcfg.control_period))

    for _ in range(n_ticks):
        t = world.time
        if t >= next_round - 1e-9:
            statuses = build_statuses(world)
            command = central_coordinate(statuses, coordinator)
            records.append({"type": "coordination", "t": rounded(t),
                            "statuses": [s.as_record() for s in statuses],
                            "command": command.as_record()})
            next_round = t + rcfg.decision_period

        actions = {}
        for v in world.controlled:
            pipe = pipelines[v.cid]
            if v.reached:
                actions[v.cid] = _hold_action(v)
                continue
            emergency_now, reason = pre_evaluate_emergency(world, v,
                                                           rcfg.emergency_ttc_threshold)
            cmd = command

            def adjust(decision: Decision, view: DecisionView, _vid=v.track_id, _cmd=cmd):
                return apply_command(_cmd, _vid, decision, view)

            pipe.maybe_refresh(world, emergency_now, reason,
                               adjust=adjust if cmd is not None else None)
            action, info = pipe.control(world)
            actions[v.cid] = action
            surround = _surround_record(world, v, rcfg.metrics_range)
            records.extend(pipe.records)
            pipe.records.clear()
            records.append({
                "type": "tick", "t": rounded(t), "vehicle": v.track_id,
                "ego": [rounded(v.state.x), rounded(v.state.y), rounded(v.state.v),
                        rounded(v.state.psi), rounded(v.state.theta)],
                "action": [rounded(action.a), rounded(action.theta_cmd)],
                "cost": info["cost"], "fallback": info["fallback"],
                "decision_id": pipe.latched.decision_id,
                "decision_age": rounded(t - pipe.latched.activated_at),
                "emergency": emergency_now, "surround": surround})

        world.step(actions, rcfg.control_period)
        pair = world.detect_collision()
        if pair is not None:
            outcome = "collision"
            collision_pair = pair
            duration = world.time
            break
        for v in world.controlled:
            if not v.reached and world.check_goal(v):
                v.reached = True
        if all(v.reached for v in world.controlled):
            outcome = "reached_goal"
            duration = world.time
            break

    per_vehicle = {v.track_id: ("reached_goal" if v.reached else outcome)
                   for v in world.controlled}
    records.append({"type": "summary", "outcome": outcome, "duration": rounded(duration),
                    "collision": list(collision_pair) if collision_pair else None,
                    "family": family, "seed": seed,
                    "per_vehicle": {str(k): v for k, v in sorted(per_vehicle.items())}})
    return JointEpisodeResult(outcome=outcome, duration=duration, records=records,
                              per_vehicle=per_vehicle, collision_pair=collision_pair)


def _hold_action(vehicle: ControlledVehicle):
    from .dynamics import Action
    return Action(vehicle.params.a_min, 0.0)
