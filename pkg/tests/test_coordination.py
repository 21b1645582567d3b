import pytest

from guidedmpc.controller import SolverConfig
from guidedmpc.coordination import (CoordinationCommand, LocalStatus, all_yield,
                                    apply_command, build_statuses, central_coordinate,
                                    conflict_pairs, oracle_coordinator, run_joint_episode)
from guidedmpc.decision import Decision
from guidedmpc.observation import AttentionMask
from guidedmpc.providers import OracleProvider, OracleRulebook
from guidedmpc.runtime import RuntimeConfig
from guidedmpc.scenarios import narrow_road_world
from guidedmpc.weights import WeightSelection

FAST_SOLVER = SolverConfig(horizon=20, iterations=25, restarts=0)


def _status(vid, x=0.0, conflict=True):
    return LocalStatus(vehicle_id=vid, x=x, y=0.0, speed=5.0,
                       path_summary="lane nr toward goal",
                       blocking_conflict=conflict, note="")


def test_conflict_pairs_only_flagged():
    statuses = [_status(900, conflict=True), _status(901, conflict=True),
                _status(902, conflict=False)]
    assert conflict_pairs(statuses) == [(900, 901)]


def test_oracle_coordinator_exactly_one_proceed():
    coord = oracle_coordinator(bays=[(33.0, -1.75), (87.0, 1.75)])
    statuses = [_status(900, x=10.0), _status(901, x=110.0)]
    cmd = coord(statuses)
    directives = sorted(cmd.directives.values())
    assert directives == ["proceed", "yield"]


def test_no_conflict_all_proceed():
    coord = oracle_coordinator(bays=[(33.0, -1.75)])
    statuses = [_status(900, conflict=False), _status(901, conflict=False)]
    cmd = central_coordinate(statuses, coord)
    assert set(cmd.directives.values()) == {"proceed"}


def test_double_proceed_rejected():
    def bad_provider(statuses):
        return CoordinationCommand({s.vehicle_id: "proceed" for s in statuses}, "bad")

    statuses = [_status(900), _status(901)]
    cmd = central_coordinate(statuses, bad_provider)
    assert set(cmd.directives.values()) == {"yield"}


def test_provider_crash_yields_everywhere():
    def crashing(statuses):
        raise RuntimeError("no coordinator")

    statuses = [_status(900), _status(901)]
    cmd = central_coordinate(statuses, crashing)
    assert set(cmd.directives.values()) == {"yield"}


def test_nearer_bay_vehicle_yields():
    coord = oracle_coordinator(bays=[(0.0, 0.0)])
    statuses = [_status(900, x=5.0), _status(901, x=50.0)]
    cmd = coord(statuses)
    assert cmd.directives[900] == "yield"
    assert cmd.directives[901] == "proceed"


def _decision():
    return Decision(ego_trajectory_index=0, participant_trajectory_indices={},
                    attention_mask=AttentionMask(()), bias_selection=None,
                    weight_selection=WeightSelection(), rationale_text="cruise",
                    issued_at=0.0, validity=5.0)


def test_apply_yield_maps_to_stop_bias_and_high_safety():
    cmd = CoordinationCommand({900: "yield"}, "hold")
    out = apply_command(cmd, 900, _decision(), view=None)
    assert out.bias_selection is not None
    assert out.weight_selection.safety == 2
    assert out.weight_selection.action == 2


def test_apply_proceed_only_annotates():
    cmd = CoordinationCommand({900: "proceed"}, "go")
    base = _decision()
    out = apply_command(cmd, 900, base, view=None)
    assert out.bias_selection is None
    assert out.weight_selection == base.weight_selection
    assert "proceed" in out.rationale_text


def test_narrow_world_statuses_flag_conflict():
    world = narrow_road_world(1)
    statuses = build_statuses(world)
    assert len(statuses) == 2
    assert all(s.blocking_conflict for s in statuses)


def test_joint_narrow_episode_both_reach_goal():
    world = narrow_road_world(1)
    providers = {v.cid: OracleProvider(OracleRulebook(family="narrow"))
                 for v in world.controlled}
    zone = world.road.zones[0]
    result = run_joint_episode(world, providers,
                               oracle_coordinator(world.road.bays, zone),
                               seed=1, solver_config=FAST_SOLVER,
                               runtime_config=RuntimeConfig(episode_timeout=120.0))
    assert result.outcome == "reached_goal"
    assert result.collision_pair is None
    assert set(result.per_vehicle.values()) == {"reached_goal"}
    rounds = [r for r in result.records if r["type"] == "coordination"]
    assert rounds
    for rec in rounds:
        directives = rec["command"]["directives"]
        flagged = [s["vehicle"] for s in rec["statuses"] if s["conflict"]]
        if len(flagged) >= 2:
            proceeds = [v for v in flagged if directives[str(v)] == "proceed"]
            assert len(proceeds) <= 1
