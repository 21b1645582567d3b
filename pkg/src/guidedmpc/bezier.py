"""Candidate reference paths as Bezier curves over lane-centerline control points."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleState
from .geometry import wrap_angle
from .observation import PREDICTION_POINTS, StaticObservation
from .roads import Lane

SENSING_RANGE = 50.0          # m, lane lookup and waypoint span
HEADING_COMPAT = 1.31         # rad (~75 deg), lanes steeper than this are not candidates


class NoReferenceError(RuntimeError):
    """No lane within sensing range: no reference available."""


@dataclass(frozen=True)
class ControlPolygon:
    points: tuple[tuple[float, float], ...]
    lane_id: str | None = None
    is_duplicate: bool = False

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("control polygon needs at least 2 points")
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            if math.hypot(x1 - x0, y1 - y0) <= 1e-6:
                raise ValueError("coincident consecutive control points")

    @property
    def degree(self) -> int:
        return len(self.points) - 1

    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


@dataclass(frozen=True)
class ReferenceState:
    x: float
    y: float
    v_ref: float
    psi_ref: float
    theta_ref: float


@dataclass(frozen=True)
class ReferenceTrajectory:
    samples: tuple[ReferenceState, ...]
    dt: float

    def __post_init__(self):
        if not self.samples:
            raise ValueError("reference needs at least one sample")


def _de_casteljau(pts: np.ndarray, gamma: float) -> np.ndarray:
    work = pts.copy()
    for r in range(1, len(pts)):
        work[: len(pts) - r] = (1.0 - gamma) * work[: len(pts) - r] + gamma * work[1: len(pts) - r + 1]
    return work[0]


def _casteljau_many(pts: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """De Casteljau evaluated at many parameters at once; returns (len(gammas), 2)."""
    g = gammas[:, None]
    work = np.broadcast_to(pts[:, None, :], (len(pts), len(gammas), 2)).copy()
    for r in range(1, len(pts)):
        m = len(pts) - r
        work[:m] = (1.0 - g) * work[:m] + g * work[1: m + 1]
    return work[0]


def curve_points(polygon: ControlPolygon, gammas: np.ndarray) -> np.ndarray:
    """Vectorized bezier_point over an array of parameters in [0, 1]."""
    if np.any(gammas < 0.0) or np.any(gammas > 1.0):
        raise ValueError("gamma outside [0, 1]")
    return _casteljau_many(polygon.array(), np.asarray(gammas, dtype=float))


def arc_positions(polygon: ControlPolygon, arcs: np.ndarray,
                  resolution: int = 128) -> np.ndarray:
    """Curve points at the given arc-length positions (clamped to the curve span)."""
    gammas, arc = _arc_table(polygon, resolution)
    g = np.interp(np.asarray(arcs, dtype=float), arc, gammas)
    return _casteljau_many(polygon.array(), g)


def bezier_point(polygon: ControlPolygon, gamma: float) -> tuple[float, float]:
    """Evaluate the curve at gamma in [0, 1] (De Casteljau, numerically stable)."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma {gamma} outside [0, 1]")
    p = _de_casteljau(polygon.array(), gamma)
    return float(p[0]), float(p[1])


def bezier_derivatives(polygon: ControlPolygon, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Curve point plus first and second parametric derivatives at gamma."""
    pts = polygon.array()
    n = len(pts) - 1
    point = _de_casteljau(pts, gamma)
    d1_pts = n * np.diff(pts, axis=0)
    d1 = _de_casteljau(d1_pts.astype(float), gamma)
    if n >= 2:
        d2_pts = (n - 1) * np.diff(d1_pts, axis=0)
        d2 = _de_casteljau(d2_pts.astype(float), gamma)
    else:
        d2 = np.zeros(2)
    return point, d1, d2


def _candidate_lanes(static_obs: StaticObservation, state: VehicleState,
                     sensing_range: float) -> list[tuple[float, float, Lane]]:
    """Heading-compatible lanes ranked by |lateral offset| to the vehicle."""
    ranked = []
    for lane in static_obs.lanes:
        s, lateral = lane.centerline.project((state.x, state.y))
        if abs(lateral) > sensing_range:
            continue
        tangent = lane.centerline.heading_at(s)
        if abs(wrap_angle(tangent - state.psi)) > HEADING_COMPAT:
            continue
        ranked.append((abs(lateral), s, lane))
    ranked.sort(key=lambda item: (item[0], item[2].id))
    return ranked


def _polygon_for(lane: Lane, state: VehicleState, s0: float,
                 sensing_range: float) -> ControlPolygon:
    """Vehicle position plus waypoints ahead on the centerline (extrapolated past the end)."""
    line = lane.centerline
    n_way = PREDICTION_POINTS - 1
    spacing = sensing_range / n_way
    pts: list[tuple[float, float]] = [(state.x, state.y)]
    end_heading = line.heading_at(line.length - 1e-6) if not line.closed else None
    for k in range(1, n_way + 1):
        s = s0 + k * spacing
        if line.closed or s <= line.length:
            p = line.point_at(s)
        else:
            tail = line.point_at(line.length)
            over = s - line.length
            p = tail + over * np.array([math.cos(end_heading), math.sin(end_heading)])
        pts.append((float(p[0]), float(p[1])))
    return ControlPolygon(points=tuple(pts), lane_id=lane.id)


def candidate_for_lane(static_obs: StaticObservation, state: VehicleState, lane_id: str,
                       sensing_range: float = SENSING_RANGE) -> ControlPolygon:
    lane = static_obs.lane(lane_id)
    s0, _ = lane.centerline.project((state.x, state.y))
    return _polygon_for(lane, state, s0, sensing_range)


def generate_candidates(static_obs: StaticObservation, state: VehicleState,
                        sensing_range: float = SENSING_RANGE) -> list[ControlPolygon]:
    """Exactly three candidate polygons over the nearest heading-compatible lanes.

    When fewer than three lanes qualify, the nearest one is repeated and the
    copies are flagged as duplicates.
    """
    ranked = _candidate_lanes(static_obs, state, sensing_range)
    if not ranked:
        raise NoReferenceError("no reference available")
    polygons = [_polygon_for(lane, state, s0, sensing_range)
                for _, s0, lane in ranked[:3]]
    while len(polygons) < 3:
        first = polygons[0]
        polygons.append(ControlPolygon(points=first.points, lane_id=first.lane_id,
                                       is_duplicate=True))
    return polygons


def _arc_table(polygon: ControlPolygon, resolution: int = 512) -> tuple[np.ndarray, np.ndarray]:
    gammas = np.linspace(0.0, 1.0, resolution)
    pts = _casteljau_many(polygon.array(), gammas)
    seg = np.diff(pts, axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    return gammas, arc


def sample_reference(polygon: ControlPolygon, target_speed: float, horizon: int,
                     dt: float, wheelbase: float = 2.8,
                     resolution: int = 2048) -> ReferenceTrajectory:
    """Arc-length sample the curve into horizon+1 states spaced target_speed*dt apart.

    Past the end of the curve the reference continues along the final tangent.
    """
    if target_speed <= 0:
        raise ValueError("target_speed must be positive")
    gammas, arc = _arc_table(polygon, resolution)
    total = arc[-1]
    ds = target_speed * dt
    arcs = ds * np.arange(horizon + 1)
    on_curve = arcs <= total
    g = np.interp(arcs[on_curve], arc, gammas)

    pts = polygon.array()
    n = len(pts) - 1
    points = _casteljau_many(pts, g)
    d1_pts = (n * np.diff(pts, axis=0)).astype(float)
    d1 = _casteljau_many(d1_pts, g) if n >= 1 else np.zeros((len(g), 2))
    if n >= 2:
        d2_pts = ((n - 1) * np.diff(d1_pts, axis=0)).astype(float)
        d2 = _casteljau_many(d2_pts, g)
    else:
        d2 = np.zeros((len(g), 2))

    tail_point, tail_d1, _ = bezier_derivatives(polygon, 1.0)
    tail_psi = math.atan2(tail_d1[1], tail_d1[0])
    speed2 = np.einsum("ij,ij->i", d1, d1)
    ok = speed2 >= 1e-12
    psi = np.where(ok, np.arctan2(d1[:, 1], d1[:, 0]), tail_psi)
    kappa = np.where(ok, (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
                     / np.where(ok, speed2, 1.0) ** 1.5, 0.0)
    theta = np.arctan(wheelbase * kappa)

    samples = [ReferenceState(float(points[i, 0]), float(points[i, 1]), target_speed,
                              float(psi[i]), float(theta[i]))
               for i in range(len(g))]
    for s in arcs[~on_curve]:
        over = float(s) - total
        samples.append(ReferenceState(float(tail_point[0] + over * math.cos(tail_psi)),
                                      float(tail_point[1] + over * math.sin(tail_psi)),
                                      target_speed, tail_psi, 0.0))
    return ReferenceTrajectory(samples=tuple(samples), dt=dt)
