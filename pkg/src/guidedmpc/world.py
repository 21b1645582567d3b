"""2D micro-simulation world: controlled vehicles, car-following participants,
signal phases, collision and goal detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import Action, VehicleParams, VehicleState, step as dyn_step
from .geometry import Polyline, point_in_polygon, rect_corners, rects_overlap, wrap_angle
from .observation import (HISTORY_WINDOW, ParticipantTrack, SignalView, StaticObservation,
                          TrackPoint, build_history)
from .roads import RoadMap

EGO_LENGTH = 4.6
EGO_WIDTH = 1.8
KIND_DIMS = {"car": (4.6, 1.8), "bicycle": (1.8, 0.6), "pedestrian": (0.5, 0.5)}

IDM_JAM_DISTANCE = 2.5
IDM_COMFORT_BRAKE = 2.5
IDM_MAX_BRAKE = 6.0
CORRIDOR_HALFWIDTH = 2.6   # half lane width + half car width: straddlers still lead
LEADER_LOOKAHEAD = 70.0
STOPLINE_MARGIN = 2.0
CONTROLLED_ID_BASE = 900


@dataclass
class Participant:
    id: int
    kind: str
    lane_id: str
    route: Polyline
    s: float
    v: float
    v_max: float
    aggressiveness: float = 0.0
    compliant: bool = True
    accel: float = 0.0
    at_red: bool = False
    ego_affected: bool = False   # its current obstruction is a controlled vehicle
    done: bool = False

    @property
    def dims(self) -> tuple[float, float]:
        return KIND_DIMS[self.kind]

    def position(self) -> np.ndarray:
        return self.route.point_at(self.s)

    def heading(self) -> float:
        return self.route.heading_at(self.s)

    def track_point(self) -> TrackPoint:
        p = self.position()
        return TrackPoint(float(p[0]), float(p[1]), self.v, self.heading())


@dataclass
class ControlledVehicle:
    cid: int
    state: VehicleState
    params: VehicleParams
    v_max: float
    goal: tuple[tuple[float, float], ...]
    lane_id: str
    length: float = EGO_LENGTH
    width: float = EGO_WIDTH
    reached: bool = False

    @property
    def track_id(self) -> int:
        return CONTROLLED_ID_BASE + self.cid

    def track_point(self) -> TrackPoint:
        return TrackPoint(self.state.x, self.state.y, self.state.v, self.state.psi)


class World:
    """Mutable simulation state; stepping is deterministic given the spec."""

    def __init__(self, road: RoadMap, controlled: Sequence[ControlledVehicle],
                 participants: Sequence[Participant]):
        self.road = road
        self.time = 0.0
        self.controlled = list(controlled)
        self.participants = list(participants)
        ids = [p.id for p in self.participants] + [c.track_id for c in self.controlled]
        if len(set(ids)) != len(ids):
            raise ValueError("entity ids must be unique")
        self._stop_arcs: dict[str, float | None] = {}
        self._snapshots: list[dict[int, TrackPoint]] = []
        self._record_snapshot()

    # -- observation surface

    def signal_views(self) -> tuple[SignalView, ...]:
        return tuple(SignalView(s.id, s.position, s.state_at(self.time), s.governs)
                     for s in self.road.signals)

    def static_observation(self) -> StaticObservation:
        return StaticObservation(lanes=tuple(self.road.lanes.values()),
                                 signals=self.signal_views(),
                                 zones=tuple(self.road.zones))

    def _record_snapshot(self):
        snap: dict[int, TrackPoint] = {}
        for p in self.participants:
            if not p.done:
                snap[p.id] = p.track_point()
        for c in self.controlled:
            snap[c.track_id] = c.track_point()
        self._snapshots.append(snap)
        if len(self._snapshots) > HISTORY_WINDOW:
            self._snapshots.pop(0)

    def tracks_for(self, viewer: ControlledVehicle,
                   sensing_range: float) -> tuple[ParticipantTrack, ...]:
        """History rows of every other entity within range of the viewer, ascending id."""
        rows = build_history(self._snapshots)
        ex, ey = viewer.state.x, viewer.state.y
        tracks = []
        meta: dict[int, tuple[str, float]] = {
            p.id: (p.kind, p.v_max) for p in self.participants if not p.done}
        for c in self.controlled:
            if c.cid != viewer.cid:
                meta[c.track_id] = ("car", c.v_max)
        for pid in sorted(meta):
            if pid not in rows:
                continue
            cur = rows[pid][-1]
            if math.hypot(cur.x - ex, cur.y - ey) > sensing_range:
                continue
            kind, v_max = meta[pid]
            tracks.append(ParticipantTrack(id=pid, kind=kind, history=rows[pid],
                                           predicted=(), v_max=v_max))
        return tuple(tracks)

    # -- stepping

    def _stop_arc(self, lane_id: str) -> float | None:
        if lane_id not in self._stop_arcs:
            arc = None
            for zone in self.road.zones:
                if zone.kind == "intersection":
                    arc = self.road.lane_entry_arc(lane_id, zone)
                    if arc is not None:
                        break
            self._stop_arcs[lane_id] = arc
        return self._stop_arcs[lane_id]

    def _red_for(self, lane_id: str) -> bool:
        for sig in self.road.signals:
            if lane_id in sig.governs and sig.state_at(self.time) in ("red", "yellow"):
                return True
        return False

    def _leader_gap(self, p: Participant) -> tuple[float, float] | None:
        """Bumper gap and speed of the nearest leader on p's corridor, if any."""
        best: tuple[float, float] | None = None
        best_is_ego = False
        length = p.dims[0]

        def consider(gap_centers: float, other_len: float, v_other: float,
                     is_ego: bool = False):
            nonlocal best, best_is_ego
            gap = gap_centers - (length + other_len) / 2.0
            if gap < LEADER_LOOKAHEAD and (best is None or gap < best[0]):
                best = (max(gap, 0.01), max(v_other, 0.0))
                best_is_ego = is_ego

        for q in self.participants:
            if q.id == p.id or q.done or q.lane_id != p.lane_id:
                continue
            ds = q.s - p.s
            if p.route.closed:
                ds %= p.route.length
            if ds > 0:
                consider(ds, q.dims[0], q.v)   # only the convoy LEAD is ego-affected
        for c in self.controlled:
            s_c, lat = p.route.project((c.state.x, c.state.y))
            in_corridor = abs(lat) <= CORRIDOR_HALFWIDTH
            if not in_corridor:
                # anticipate a vehicle sweeping into the corridor within ~2 s
                heading_here = p.route.heading_at(s_c)
                normal = (-math.sin(heading_here), math.cos(heading_here))
                lat_rate = (c.state.v_x * normal[0] + c.state.v_y * normal[1])
                closing_lat = -lat_rate if lat > 0 else lat_rate
                if abs(lat) > 9.0 or closing_lat < 0.8:
                    continue
                if (abs(lat) - CORRIDOR_HALFWIDTH) / closing_lat > 2.0:
                    continue
            ds = s_c - p.s
            if p.route.closed:
                ds %= p.route.length
            if ds <= 0:
                continue
            heading = p.route.heading_at(s_c)
            rel = wrap_angle(c.state.psi - heading)
            v_along = c.state.v * math.cos(rel)
            # drivers with priority react late to vehicles cutting across their path
            crossing_cut = abs(rel) > math.pi / 4
            reaction = (12.0 + 36.0 * (1.0 - 0.5 * p.aggressiveness) if crossing_cut
                        else LEADER_LOOKAHEAD)
            if ds - (length + c.length) / 2.0 < reaction:
                consider(ds, c.length, v_along, is_ego=in_corridor or c.state.v < 2.0)

        p.at_red = False
        ego_affected = best_is_ego
        if p.compliant and self._red_for(p.lane_id):
            s_stop = self._stop_arc(p.lane_id)
            if s_stop is not None:
                ds = (s_stop - STOPLINE_MARGIN) - p.s
                if ds > -1.0:
                    gap = max(ds - length / 2.0, 0.01)
                    if best is None or gap < best[0]:
                        best = (gap, 0.0)
                        ego_affected = False
                        if p.v < 0.15:
                            p.at_red = True
        # defensive crossing: hold at the box entry while a vehicle is wedged inside
        if p.compliant and self._zone_blocked(p):
            s_stop = self._stop_arc(p.lane_id)
            if s_stop is not None:
                ds = (s_stop - STOPLINE_MARGIN) - p.s
                if ds > -1.0:
                    gap = max(ds - length / 2.0, 0.01)
                    if best is None or gap < best[0]:
                        best = (gap, 0.0)
                        ego_affected = True
        p.ego_affected = ego_affected
        return best

    def _zone_blocked(self, p: Participant) -> bool:
        for zone in self.road.zones:
            if zone.kind != "intersection":
                continue
            for c in self.controlled:
                if zone.distance(c.state.x, c.state.y) < -1.0 and c.state.v < 2.0:
                    _, lat = p.route.project((c.state.x, c.state.y))
                    if abs(lat) < 5.0:
                        return True
        return False

    def _idm_accel(self, p: Participant) -> float:
        a_cap = 1.6 + 1.0 * p.aggressiveness
        headway = 1.6 * (1.0 - 0.5 * p.aggressiveness)
        free = 1.0 - (p.v / max(p.v_max, 0.1)) ** 4
        lead = self._leader_gap(p)
        if lead is None:
            a = a_cap * free
        else:
            gap, v_lead = lead
            dv = p.v - v_lead
            s_star = IDM_JAM_DISTANCE + max(
                0.0, p.v * headway + p.v * dv / (2.0 * math.sqrt(a_cap * IDM_COMFORT_BRAKE)))
            a = a_cap * (free - (s_star / gap) ** 2)
        return min(max(a, -IDM_MAX_BRAKE), a_cap)

    def step(self, actions: Mapping[int, Action], dt: float) -> "World":
        for c in self.controlled:
            act = actions.get(c.cid, Action(0.0, 0.0))
            c.state = dyn_step(c.state, act, c.params)
        for p in self.participants:
            if p.done:
                continue
            if p.kind == "car":
                a = self._idm_accel(p)
                v_new = max(0.0, p.v + a * dt)
                p.accel = (v_new - p.v) / dt
                p.s += (p.v + v_new) / 2.0 * dt
                p.v = v_new
            else:
                p.accel = 0.0
                p.s += p.v * dt
            if p.route.closed:
                p.s %= p.route.length
            elif p.s >= p.route.length - 1e-6:
                p.done = True
        self.time += dt
        self._record_snapshot()
        return self

    # -- terminal checks

    def detect_collision(self) -> tuple[int, int] | None:
        """Oriented-rectangle overlap between each controlled vehicle and every
        other entity; returns the colliding id pair or None."""
        boxes = []
        for c in self.controlled:
            boxes.append((c.track_id,
                          rect_corners(c.state.x, c.state.y, c.state.psi, c.length, c.width)))
        for i, c in enumerate(self.controlled):
            for pid, corners in boxes[i + 1:]:
                if rects_overlap(boxes[i][1], corners):
                    return (boxes[i][0], pid)
            for p in self.participants:
                if p.done:
                    continue
                pos = p.position()
                pc = rect_corners(float(pos[0]), float(pos[1]), p.heading(), *p.dims)
                if rects_overlap(boxes[i][1], pc):
                    return (boxes[i][0], p.id)
        return None

    def check_goal(self, vehicle: ControlledVehicle) -> bool:
        return point_in_polygon((vehicle.state.x, vehicle.state.y), vehicle.goal)


def step_world(world: World, ego_action: Action, dt: float) -> World:
    """Single-vehicle stepping surface: apply the ego action, advance everything."""
    return world.step({world.controlled[0].cid: ego_action}, dt)


def detect_collision(world: World) -> tuple[int, int] | None:
    return world.detect_collision()


def check_goal(world: World, spec=None) -> bool:
    return world.check_goal(world.controlled[0])
