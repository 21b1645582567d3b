import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from guidedmpc.bezier import (ControlPolygon, NoReferenceError, bezier_point,
                              generate_candidates, sample_reference)
from guidedmpc.dynamics import VehicleState
from guidedmpc.geometry import Polyline
from guidedmpc.observation import StaticObservation
from guidedmpc.roads import Lane

QUAD = ControlPolygon(points=((0.0, 0.0), (1.0, 2.0), (2.0, 0.0)))


def _random_polygon(rng, n_points):
    while True:
        pts = rng.uniform(-50, 50, size=(n_points, 2))
        if all(np.hypot(*(b - a)) > 1e-3 for a, b in zip(pts, pts[1:])):
            return ControlPolygon(points=tuple(map(tuple, pts)))


def test_endpoints():
    assert bezier_point(QUAD, 0.0) == (0.0, 0.0)
    assert bezier_point(QUAD, 1.0) == (2.0, 0.0)


def test_quadratic_midpoint_hand_value():
    # 0.25*p0 + 0.5*p1 + 0.25*p2
    assert bezier_point(QUAD, 0.5) == pytest.approx((1.0, 1.0))


def test_gamma_domain_error():
    with pytest.raises(ValueError):
        bezier_point(QUAD, -0.01)
    with pytest.raises(ValueError):
        bezier_point(QUAD, 1.01)


def test_polygon_invariants():
    with pytest.raises(ValueError):
        ControlPolygon(points=((0.0, 0.0),))
    with pytest.raises(ValueError):
        ControlPolygon(points=((0.0, 0.0), (0.0, 0.0), (1.0, 1.0)))


def test_convex_hull_property_bulk():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        poly = _random_polygon(rng, int(rng.integers(3, 8)))
        hull = ConvexHull(np.asarray(poly.points))
        gamma = float(rng.uniform())
        p = np.array(bezier_point(poly, gamma))
        # every hull facet inequality holds within 1e-9
        assert np.all(hull.equations[:, :2] @ p + hull.equations[:, 2] <= 1e-9)


def test_reversal_symmetry_bulk():
    rng = np.random.default_rng(43)
    for _ in range(1000):
        poly = _random_polygon(rng, int(rng.integers(2, 8)))
        rev = ControlPolygon(points=tuple(reversed(poly.points)))
        gamma = float(rng.uniform())
        a = bezier_point(poly, gamma)
        b = bezier_point(rev, 1.0 - gamma)
        assert a == pytest.approx(b, abs=1e-9)


def _static(lanes):
    return StaticObservation(lanes=tuple(
        Lane(lane_id, 3.5, Polyline(points)) for lane_id, points in lanes))


def test_sample_reference_straight_line():
    poly = ControlPolygon(points=((0.0, 0.0), (100.0, 0.0)))
    ref = sample_reference(poly, target_speed=10.0, horizon=5, dt=0.1)
    assert [round(s.x, 9) for s in ref.samples] == [0, 1, 2, 3, 4, 5]
    assert all(s.psi_ref == 0.0 for s in ref.samples)
    assert all(s.theta_ref == 0.0 for s in ref.samples)
    assert all(s.v_ref == 10.0 for s in ref.samples)


def test_sample_reference_initial_tangent():
    ref = sample_reference(QUAD, target_speed=0.5, horizon=1, dt=0.1)
    assert ref.samples[0].psi_ref == pytest.approx(math.atan2(2.0, 1.0))


def test_sample_reference_extension_colinear():
    poly = ControlPolygon(points=((0.0, 0.0), (3.0, 0.0)))
    ref = sample_reference(poly, target_speed=10.0, horizon=10, dt=0.1)
    tail = ref.samples[4:]
    assert all(s.y == pytest.approx(0.0, abs=1e-9) for s in tail)
    xs = [s.x for s in tail]
    for a, b in zip(xs, xs[1:]):
        assert b - a == pytest.approx(1.0, abs=1e-9)


def _path_like_polygon(rng):
    """Random polygon with road-like geometry: bounded turning, 6-14 m legs."""
    n = int(rng.integers(3, 8))
    heading = rng.uniform(-np.pi, np.pi)
    pos = rng.uniform(-20, 20, size=2)
    pts = [pos.copy()]
    for _ in range(n - 1):
        heading += rng.uniform(-0.6, 0.6)
        pos = pos + rng.uniform(6.0, 14.0) * np.array([np.cos(heading), np.sin(heading)])
        pts.append(pos.copy())
    return ControlPolygon(points=tuple(map(tuple, pts)))


def test_arc_spacing_within_one_percent():
    from guidedmpc.bezier import _arc_table

    rng = np.random.default_rng(44)
    for _ in range(1000):
        poly = _path_like_polygon(rng)
        speed = float(rng.uniform(2, 12))
        ref = sample_reference(poly, target_speed=speed, horizon=12, dt=0.1)
        target = speed * 0.1
        total = _arc_table(poly)[1][-1]
        arr = np.array([[s.x, s.y] for s in ref.samples])
        gaps = np.hypot(*np.diff(arr, axis=0).T)
        for k, gap in enumerate(gaps):
            if (k + 1) * target <= total:
                assert abs(gap - target) <= 0.01 * target
            elif k * target >= total:   # extension tail: exact
                assert abs(gap - target) <= 1e-9 * target


def test_generate_candidates_three_lanes():
    static = _static([("a", [(-10, 0), (200, 0)]),
                      ("b", [(-10, 3.5), (200, 3.5)]),
                      ("c", [(-10, 7.0), (200, 7.0)])])
    ego = VehicleState(0, 0, 8, 0.0, 0.0)
    cands = generate_candidates(static, ego)
    assert len(cands) == 3
    assert {c.lane_id for c in cands} == {"a", "b", "c"}
    assert not any(c.is_duplicate for c in cands)
    assert all(c.points[0] == (0.0, 0.0) for c in cands)


def test_generate_candidates_single_lane_duplicates():
    static = _static([("only", [(-10, 0), (200, 0)])])
    cands = generate_candidates(static, VehicleState(0, 0, 8, 0.0, 0.0))
    assert len(cands) == 3
    assert [c.is_duplicate for c in cands] == [False, True, True]


def test_generate_candidates_excludes_farthest():
    static = _static([(f"l{k}", [(-10, 3.5 * k), (200, 3.5 * k)]) for k in range(4)])
    ego = VehicleState(0, 5.25, 8, 0.0, 0.0)  # between l1 and l2
    cands = generate_candidates(static, ego)
    ids = {c.lane_id for c in cands}
    # brute force: lateral distances are 5.25, 1.75, 1.75, 5.25 -> l0 or l3 dropped
    assert {"l1", "l2"} <= ids
    assert len(ids & {"l0", "l3"}) == 1


def test_generate_candidates_order_invariant():
    lanes = [("a", [(-10, 0), (200, 0)]), ("b", [(-10, 3.5), (200, 3.5)]),
             ("c", [(-10, 7.0), (200, 7.0)])]
    ego = VehicleState(0, 1.0, 8, 0.0, 0.0)
    first = generate_candidates(_static(lanes), ego)
    second = generate_candidates(_static(list(reversed(lanes))), ego)
    assert [c.points for c in first] == [c.points for c in second]


def test_no_lanes_in_range_errors():
    static = _static([("far", [(-10, 500), (200, 500)])])
    with pytest.raises(NoReferenceError):
        generate_candidates(static, VehicleState(0, 0, 8, 0.0, 0.0))
