"""Acceptance gate: every criterion as one test, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v` for one pass/fail line per
criterion. The suite-level criteria share one session fixture that executes
the bundled 25-seed unsignalized-intersection runs.
"""
import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from guidedmpc.bezier import ControlPolygon, bezier_point, sample_reference, _arc_table
from guidedmpc.controller import SolverConfig, cost_action, cost_tracking, solve
from guidedmpc.decision import format_decision, parse_decision
from guidedmpc.dynamics import Action, VehicleState
from guidedmpc.logs import canonical
from guidedmpc.metrics import MetricsConfig, overall_cost
from guidedmpc.observation import (PREDICTION_POINTS, AttentionMask, ObservationBundle,
                                   ParticipantTrack, StaticObservation, TrackPoint,
                                   apply_mask, assemble)
from guidedmpc.providers import (BaselineProvider, LlmProvider, MockTransport,
                                 OracleProvider, OracleRulebook)
from guidedmpc.coordination import oracle_coordinator, run_joint_episode
from guidedmpc.roads import load_suite_manifest
from guidedmpc.runtime import RuntimeConfig, run_episode
from guidedmpc.scenarios import generate_scenario, narrow_road_world
from guidedmpc.suites import SUITE_SOLVER, run_suite
from guidedmpc.weights import ActionBias, WeightSet, WeightSelection, default_weight_pool

from test_metrics import REFERENCE_ROWS
from test_bezier import _path_like_polygon

USI_SEEDS = load_suite_manifest()["usi"]
SUITE_METRICS = MetricsConfig(penalty_variant="intent")


# --- criterion: overall-cost identity over the printed reference rows ----------

def test_reference_table_cost_identity():
    worst = 0.0
    for label, ineff, time, acc, dist, oc in REFERENCE_ROWS:
        got = overall_cost(ineff, time, acc, dist)
        worst = max(worst, abs(got - oc))
        assert got == pytest.approx(oc, abs=0.1), label
    assert len(REFERENCE_ROWS) == 30
    print(f"\n[acceptance] cost identity holds on 30 rows, worst residual {worst:.3f}")


# --- suite fixtures -------------------------------------------------------------

@pytest.fixture(scope="session")
def usi_suites():
    runs = {}
    runs["oracle"] = run_suite("usi", USI_SEEDS, "oracle")
    runs["baseline"] = run_suite("usi", USI_SEEDS, "baseline")
    return runs


@pytest.fixture(scope="session")
def usi_ablation(usi_suites):
    runs = dict(usi_suites)
    runs["guidance_only"] = run_suite("usi", USI_SEEDS, "oracle",
                                      use_encoder=False, use_guidance=True)
    runs["encoder_only"] = run_suite("usi", USI_SEEDS, "oracle",
                                     use_encoder=True, use_guidance=False)
    return runs


# --- criterion: relative behavior on the bundled suite ---------------------------

def test_usi_oracle_beats_fixed_weight_baseline(usi_suites):
    oracle = usi_suites["oracle"]
    baseline = usi_suites["baseline"]
    oracle_report = oracle.report(SUITE_METRICS)
    baseline_report = baseline.report(SUITE_METRICS)
    print(f"\n[acceptance] usi oracle  : {oracle_report.row()}")
    print(f"[acceptance] usi baseline: {baseline_report.row()}")
    assert oracle_report.collisions == 0
    assert oracle_report.overall_cost < baseline_report.overall_cost


# --- criterion: ablation direction ----------------------------------------------

def test_usi_ablation_direction(usi_ablation):
    reports = {name: suite.report(SUITE_METRICS).overall_cost
               for name, suite in usi_ablation.items()}
    print(f"\n[acceptance] ablation overall costs: "
          + ", ".join(f"{k}={v:.1f}" for k, v in sorted(reports.items())))
    assert reports["guidance_only"] < reports["baseline"]
    assert reports["oracle"] <= reports["guidance_only"]
    assert reports["oracle"] <= reports["encoder_only"]


# --- criterion: stop-decision regime --------------------------------------------

def _straight_reference(h, v):
    pts = tuple((20.0 * k, 0.0) for k in range(PREDICTION_POINTS))
    return sample_reference(ControlPolygon(points=pts), v, h, 0.1)


def test_stop_decision_regime():
    pool = default_weight_pool()
    cfg = SolverConfig(horizon=25, iterations=50, restarts=0)
    state = VehicleState(0, 0, 8.0, 0.0, 0.0)
    ref = _straight_reference(cfg.horizon, 8.0)
    bundle = ObservationBundle(static_obs=StaticObservation(lanes=()), dynamic=(),
                               timestamp=0.0)
    stop_bias = ActionBias(a_bias=-3.3, theta_bias=0.0, active=True)  # firm-brake interval

    high = pool.compose(WeightSelection(action=2, safety=2))
    res_stop = solve(state, ref, bundle, stop_bias, high, cfg,
                     prev_action=Action(0.0, 0.0))
    print(f"\n[acceptance] stop regime: c_act={res_stop.breakdown.c_act:.1f} "
          f"c_trk={res_stop.breakdown.c_trk:.1f} a={res_stop.first_action.a:.2f}")
    assert res_stop.breakdown.c_act > res_stop.breakdown.c_trk
    assert -4.2 <= res_stop.first_action.a < -2.4   # inside the selected interval

    default = pool.compose(WeightSelection())
    res_move = solve(state, ref, bundle, ActionBias.INACTIVE, default, cfg,
                     prev_action=Action(0.0, 0.0))
    assert res_move.first_action.a > -0.5           # keeps moving


# --- criterion: bezier property suite on 1000 random polygons --------------------

def test_bezier_property_suite_1000():
    rng = np.random.default_rng(2024)
    hull_checked = 0
    for k in range(1000):
        poly = _path_like_polygon(rng)
        pts = np.asarray(poly.points)
        gamma = float(rng.uniform())
        # endpoints
        assert bezier_point(poly, 0.0) == pytest.approx(tuple(pts[0]), abs=1e-12)
        assert bezier_point(poly, 1.0) == pytest.approx(tuple(pts[-1]), abs=1e-12)
        # convex hull within 1e-9
        p = np.array(bezier_point(poly, gamma))
        if len(pts) >= 3:
            hull = ConvexHull(pts)
            assert np.all(hull.equations[:, :2] @ p + hull.equations[:, 2] <= 1e-9)
            hull_checked += 1
        # reversal symmetry
        rev = ControlPolygon(points=tuple(reversed(poly.points)))
        assert np.allclose(bezier_point(rev, 1.0 - gamma), p, atol=1e-9)
        # arc spacing within 1%, extension tail exact
        if k % 10 == 0:
            speed = float(rng.uniform(2, 12))
            ref = sample_reference(poly, speed, 12, 0.1)
            target = speed * 0.1
            total = _arc_table(poly)[1][-1]
            arr = np.array([[s.x, s.y] for s in ref.samples])
            gaps = np.hypot(*np.diff(arr, axis=0).T)
            for i, gap in enumerate(gaps):
                if (i + 1) * target <= total:
                    assert abs(gap - target) <= 0.01 * target
                elif i * target >= total:
                    assert abs(gap - target) <= 1e-9 * target
    assert hull_checked >= 900
    print(f"\n[acceptance] bezier properties hold on 1000 polygons")


# --- criterion: mask properties on randomized bundles -----------------------------

def _random_tracks(rng, n):
    tracks = []
    for pid in range(1, n + 1):
        base = rng.uniform(-30, 30, size=2)
        heading = float(rng.uniform(-math.pi, math.pi))
        pts = tuple((float(base[0] + 9 * k * math.cos(heading)),
                     float(base[1] + 9 * k * math.sin(heading)))
                    for k in range(PREDICTION_POINTS))
        flat = tuple(c for xy in pts for c in xy)
        tracks.append(ParticipantTrack(
            id=pid, kind="car",
            history=(TrackPoint(float(base[0]), float(base[1]),
                                float(rng.uniform(0, 10)), heading),),
            predicted=flat, v_max=10.0))
    return tuple(tracks)


def test_mask_properties_randomized():
    from guidedmpc.controller import cost_safety

    rng = np.random.default_rng(77)
    static = StaticObservation(lanes=())
    w = WeightSet(w_saf=1.7, d_hat=12.0)
    states = [VehicleState(0, 0, 5, 0, 0)] * 8
    for _ in range(50):
        n = int(rng.integers(1, 7))
        tracks = _random_tracks(rng, n)
        bits = tuple(int(b) for b in rng.integers(0, 2, size=n))
        mask = AttentionMask(bits=bits)
        ones = AttentionMask.ones(n)
        # identity mask is a no-op
        assert apply_mask(tracks, ones) == tracks
        # idempotence
        once = apply_mask(tracks, mask)
        assert apply_mask(once, mask) == once
        # zeroing
        for track, bit in zip(once, bits):
            if not bit:
                assert not track.active
                assert set(track.predicted) <= {0.0}
        # masked participants never change the clearance cost
        bundle_masked = assemble(static, tracks, mask, 0.0)
        kept = tuple(t for t, b in zip(tracks, bits) if b)
        bundle_kept = assemble(static, kept, AttentionMask.ones(len(kept)), 0.0)
        assert cost_safety(states, bundle_masked, w) == pytest.approx(
            cost_safety(states, bundle_kept, w), rel=1e-12, abs=1e-12)
    print("\n[acceptance] mask properties hold on randomized bundles")


# --- criterion: solver numerics ---------------------------------------------------

def test_gradient_agreement_100_instances():
    from test_controller import (_analytic_action_grad, _random_instance,
                                 _ref_straight)

    rng = np.random.default_rng(4096)
    checked = 0
    for _ in range(100):
        _, actions, _, bias, w = _random_instance(rng)
        prev = np.array(rng.uniform(-1, 1, size=2))
        direction = rng.normal(size=(len(actions), 2))
        direction /= np.linalg.norm(direction)
        grad = _analytic_action_grad(actions, bias, w, 0.1, prev)
        analytic = float((grad * direction).sum())
        eps = 1e-5
        plus = [Action(a.a + eps * d[0], a.theta_cmd + eps * d[1])
                for a, d in zip(actions, direction)]
        minus = [Action(a.a - eps * d[0], a.theta_cmd - eps * d[1])
                 for a, d in zip(actions, direction)]
        fd = (cost_action(plus, bias, w, 0.1, Action(*prev))
              - cost_action(minus, bias, w, 0.1, Action(*prev))) / (2 * eps)
        assert fd == pytest.approx(analytic, rel=1e-5, abs=1e-7)
        checked += 1
    assert checked == 100
    print("\n[acceptance] analytic vs central differences agree on 100 instances")


def test_solver_monotone_traces_on_logged_solves(usi_suites):
    # re-run one suite episode with trace collection on
    _, world = generate_scenario("usi", USI_SEEDS[0])
    res = run_episode(world, OracleProvider(OracleRulebook(family="usi")), "usi",
                      USI_SEEDS[0], solver_config=SUITE_SOLVER,
                      runtime_config=RuntimeConfig(episode_timeout=30.0),
                      collect_traces=True)
    assert res.solver_traces
    for trace in res.solver_traces:
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    print(f"\n[acceptance] {len(res.solver_traces)} logged solves all monotone")


def test_weight_scaling_argmin_invariance():
    pts = tuple((22.0 * k, 1.2 * k) for k in range(PREDICTION_POINTS))
    ref = sample_reference(ControlPolygon(points=pts), 8.0, 20, 0.1)
    rng = np.random.default_rng(3)
    tracks = _random_tracks(rng, 2)
    bundle = assemble(StaticObservation(lanes=()), tracks, AttentionMask.ones(2), 0.0)
    cfg = SolverConfig(horizon=20, iterations=30, restarts=1)
    state = VehicleState(0, 0, 6.0, 0.1, 0.0)
    w = WeightSet()
    base = solve(state, ref, bundle, ActionBias.INACTIVE, w, cfg, seed=9)
    for lam in (0.5, 2.0):
        res = solve(state, ref, bundle, ActionBias.INACTIVE, w.scaled(lam), cfg, seed=9)
        assert res.first_action.a == pytest.approx(base.first_action.a, abs=1e-6)
        assert res.first_action.theta_cmd == pytest.approx(base.first_action.theta_cmd,
                                                           abs=1e-6)
    print("\n[acceptance] argmin invariant under weight scaling 0.5/1/2")


# --- criterion: dual-frequency contract -------------------------------------------

def test_dual_frequency_contract_usi_200s():
    rcfg = RuntimeConfig()   # 200 s timeout
    _, world = generate_scenario("usi", USI_SEEDS[1])
    res = run_episode(world, OracleProvider(OracleRulebook(family="usi")), "usi",
                      USI_SEEDS[1], solver_config=SUITE_SOLVER, runtime_config=rcfg)
    ticks = [r for r in res.records if r["type"] == "tick"]
    for t in ticks:
        limit = (rcfg.emergency_decision_period if t["emergency"]
                 else rcfg.decision_period) + rcfg.control_period
        assert t["decision_age"] <= limit + 1e-9
    print(f"\n[acceptance] decision age bounded over {len(ticks)} ticks")


def test_fast_path_arrives_within_emergency_period():
    from test_runtime import _inject_obstacle

    rcfg = RuntimeConfig(episode_timeout=30.0)
    _, world = generate_scenario("eoa", 3)
    world = _inject_obstacle(world)
    res = run_episode(world, OracleProvider(OracleRulebook(family="eoa")), "eoa", 3,
                      solver_config=SUITE_SOLVER, runtime_config=rcfg)
    ticks = [r for r in res.records if r["type"] == "tick"]
    rising = next(t["t"] for t in ticks if t["emergency"])
    em_decisions = [r for r in res.records if r["type"] == "decision" and r["emergency"]]
    assert em_decisions, "fast-path decision must be issued"
    first = min(d["t_active"] for d in em_decisions)
    assert first <= rising + rcfg.emergency_decision_period + 1e-9
    print(f"\n[acceptance] fast-path decision {first - rising:.2f} s after detection")


# --- criterion: determinism --------------------------------------------------------

def test_byte_identical_reruns():
    def run_once():
        _, world = generate_scenario("usi", USI_SEEDS[2])
        res = run_episode(world, OracleProvider(OracleRulebook(family="usi")), "usi",
                          USI_SEEDS[2], solver_config=SUITE_SOLVER,
                          runtime_config=RuntimeConfig(episode_timeout=40.0))
        return "\n".join(canonical(r) for r in res.records).encode()

    assert run_once() == run_once()
    print("\n[acceptance] identical seeds give byte-identical logs")


# --- criterion: remote-decision client contract -------------------------------------

def test_llm_client_contract():
    from test_providers import _canned_reply, _view

    view = _view()
    text, expected = _canned_reply(view)
    assert LlmProvider(MockTransport([text])).decide(view) == expected

    # double failure returns the fallback signal and the loop keeps running
    class _GarbageLlm(LlmProvider):
        pass

    provider = _GarbageLlm(MockTransport(["junk"] * 200))
    assert provider.decide(view) is None

    _, world = generate_scenario("lane", 2)
    res = run_episode(world, provider, "lane", 2, solver_config=SUITE_SOLVER,
                      runtime_config=RuntimeConfig(episode_timeout=12.0))
    ticks = [r for r in res.records if r["type"] == "tick"]
    assert len(ticks) == len({round(t["t"], 6) for t in ticks})
    assert ticks[-1]["t"] >= 11.8 or res.outcome != "timeout"
    print("\n[acceptance] mock round trip parses; double failure degrades gracefully")


# --- criterion: coordination ---------------------------------------------------------

def test_narrow_road_coordination():
    world = narrow_road_world(2)
    providers = {v.cid: OracleProvider(OracleRulebook(family="narrow"))
                 for v in world.controlled}
    zone = world.road.zones[0]
    result = run_joint_episode(world, providers,
                               oracle_coordinator(world.road.bays, zone), seed=2,
                               solver_config=SUITE_SOLVER,
                               runtime_config=RuntimeConfig(episode_timeout=150.0))
    assert result.outcome == "reached_goal"
    assert result.collision_pair is None
    for rec in result.records:
        if rec["type"] != "coordination":
            continue
        flagged = [s["vehicle"] for s in rec["statuses"] if s["conflict"]]
        if len(flagged) >= 2:
            proceeds = [v for v in flagged
                        if rec["command"]["directives"][str(v)] == "proceed"]
            assert len(proceeds) <= 1
    print(f"\n[acceptance] both vehicles reached goals in {result.duration:.1f} s")
