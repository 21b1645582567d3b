"""Seeded scenario generation for the five driving families plus the
narrow-road coordination setup."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleParams, VehicleState
from .roads import RoadMap, load_preset
from .world import ControlledVehicle, Participant, World

FAMILIES = ("si", "usi", "lane", "rab", "eoa")
_FAMILY_CODE = {"si": 1, "usi": 2, "lane": 3, "rab": 4, "eoa": 5, "narrow": 6}


@dataclass(frozen=True)
class ParticipantSpec:
    id: int
    kind: str
    lane_id: str
    s0: float
    v0: float
    v_max: float
    aggressiveness: float


@dataclass(frozen=True)
class EgoSpec:
    lane_id: str
    s0: float
    v0: float
    v_max: float
    goal: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ScenarioSpec:
    family: str
    seed: int
    map_name: str
    traffic_density: float            # vehicles per 100 m of populated lane
    count_range: tuple[int, int]
    ego: EgoSpec
    participants: tuple[ParticipantSpec, ...]


def _rng(family: str, seed: int) -> np.random.Generator:
    return np.random.default_rng([_FAMILY_CODE[family], seed])


def _rect(x0: float, x1: float, y0: float, y1: float) -> tuple[tuple[float, float], ...]:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def _stream(rng: np.random.Generator, ids: "_IdGen", lane_id: str, count: int,
            s_start: float, spacing_lo: float, spacing_hi: float,
            v_lo: float, v_hi: float) -> list[ParticipantSpec]:
    out = []
    s = s_start + rng.uniform(0.0, 8.0)
    for _ in range(count):
        v = rng.uniform(v_lo, v_hi)
        out.append(ParticipantSpec(id=ids.next(), kind="car", lane_id=lane_id, s0=s,
                                   v0=v, v_max=v + rng.uniform(0.0, 1.0),
                                   aggressiveness=float(rng.uniform(0.0, 1.0))))
        s += rng.uniform(spacing_lo, spacing_hi)
    return out


class _IdGen:
    def __init__(self):
        self._next = 1

    def next(self) -> int:
        value = self._next
        self._next += 1
        return value


def _upstream_stream(rng: np.random.Generator, ids: "_IdGen", lane_id: str, count: int,
                     s_box: float, v_lo: float, v_hi: float) -> list[ParticipantSpec]:
    """Queue a stream behind a conflict point so it contests the crossing window."""
    out = []
    s = s_box - rng.uniform(10.0, 24.0)
    for _ in range(count):
        if s < 4.0:
            break
        v = rng.uniform(v_lo, v_hi)
        out.append(ParticipantSpec(id=ids.next(), kind="car", lane_id=lane_id, s0=s,
                                   v0=v, v_max=v + rng.uniform(0.0, 1.0),
                                   aggressiveness=float(rng.uniform(0.0, 1.0))))
        s -= rng.uniform(13.0, 20.0)
    return out


def _crossroad(family: str, seed: int) -> ScenarioSpec:
    rng = _rng(family, seed)
    ids = _IdGen()
    ego_y = rng.uniform(-54.0, -42.0)
    ego = EgoSpec(lane_id="ns_0", s0=70.0 + ego_y, v0=rng.uniform(5.5, 7.5), v_max=9.0,
                  goal=_rect(-4.0, 8.0, 42.0, 58.0))
    participants: list[ParticipantSpec] = []
    # convoy follower behind ego on the same lane
    gap_back = rng.uniform(13.0, 20.0)
    participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="ns_0",
                                        s0=ego.s0 - gap_back, v0=ego.v0,
                                        v_max=rng.uniform(8.0, 9.0),
                                        aggressiveness=float(rng.uniform(0.2, 0.8))))
    # cross streams queued upstream of the junction box (entry arcs ~127-129)
    for lane in ("eb_0", "eb_1", "wb_0", "wb_1"):
        k = int(rng.integers(2, 5))
        participants += _upstream_stream(rng, ids, lane, k, 127.0, 6.0, 8.0)
    n = len(participants)
    return ScenarioSpec(family=family, seed=seed, map_name=family,
                        traffic_density=100.0 * n / 920.0, count_range=(9, 17),
                        ego=ego, participants=tuple(participants))


def _lane(seed: int) -> ScenarioSpec:
    rng = _rng("lane", seed)
    ids = _IdGen()
    ego = EgoSpec(lane_id="lane_0", s0=rng.uniform(14.0, 22.0), v0=rng.uniform(7.0, 9.0),
                  v_max=12.0, goal=_rect(250.0, 275.0, -4.0, 11.0))
    participants: list[ParticipantSpec] = []
    participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="lane_0",
                                        s0=ego.s0 - rng.uniform(12.0, 18.0), v0=ego.v0,
                                        v_max=rng.uniform(10.0, 12.0),
                                        aggressiveness=float(rng.uniform(0.2, 0.8))))
    slow_v = rng.uniform(3.0, 4.5)
    participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="lane_0",
                                        s0=ego.s0 + rng.uniform(45.0, 70.0), v0=slow_v,
                                        v_max=slow_v, aggressiveness=0.0))
    k1 = int(rng.integers(1, 3))
    participants += _stream(rng, ids, "lane_1", k1, s_start=ego.s0 + rng.uniform(-10, 30),
                            spacing_lo=25.0, spacing_hi=45.0, v_lo=8.0, v_hi=11.0)
    if rng.uniform() < 0.5:
        participants += _stream(rng, ids, "lane_2", 1, s_start=ego.s0 + rng.uniform(0, 40),
                                spacing_lo=25.0, spacing_hi=45.0, v_lo=8.0, v_hi=11.0)
    n = len(participants)
    return ScenarioSpec(family="lane", seed=seed, map_name="lane",
                        traffic_density=100.0 * n / 660.0, count_range=(3, 6),
                        ego=ego, participants=tuple(participants))


def _eoa(seed: int) -> ScenarioSpec:
    rng = _rng("eoa", seed)
    ids = _IdGen()
    ego = EgoSpec(lane_id="lane_0", s0=rng.uniform(14.0, 20.0), v0=rng.uniform(10.0, 12.0),
                  v_max=14.0, goal=_rect(225.0, 250.0, -4.0, 7.5))
    participants: list[ParticipantSpec] = []
    participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="lane_0",
                                        s0=ego.s0 - rng.uniform(14.0, 20.0), v0=ego.v0,
                                        v_max=rng.uniform(11.0, 13.0),
                                        aggressiveness=float(rng.uniform(0.2, 0.8))))
    # the sudden obstacle: a crawling vehicle dropped ahead on the ego lane
    slow_v = rng.uniform(1.5, 3.5)
    participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="lane_0",
                                        s0=ego.s0 + rng.uniform(55.0, 85.0), v0=slow_v,
                                        v_max=slow_v, aggressiveness=0.0))
    if rng.uniform() < 0.6:
        participants += _stream(rng, ids, "lane_1", 1, s_start=ego.s0 + rng.uniform(10, 50),
                                spacing_lo=30.0, spacing_hi=50.0, v_lo=9.0, v_hi=12.0)
    n = len(participants)
    return ScenarioSpec(family="eoa", seed=seed, map_name="eoa",
                        traffic_density=100.0 * n / 620.0, count_range=(2, 4),
                        ego=ego, participants=tuple(participants))


def _rab(seed: int) -> ScenarioSpec:
    rng = _rng("rab", seed)
    ids = _IdGen()
    ego = EgoSpec(lane_id="route_sn", s0=rng.uniform(2.0, 10.0), v0=rng.uniform(5.0, 6.5),
                  v_max=8.0, goal=_rect(0.0, 7.0, 50.0, 62.0))
    participants: list[ParticipantSpec] = []
    participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="route_sn",
                                        s0=ego.s0 - rng.uniform(12.0, 18.0), v0=ego.v0,
                                        v_max=rng.uniform(7.0, 8.0),
                                        aggressiveness=float(rng.uniform(0.2, 0.8))))
    k = int(rng.integers(2, 5))
    ring_len = 2.0 * np.pi * 14.0
    base = rng.uniform(0.0, ring_len)
    for j in range(k):
        v = rng.uniform(4.5, 6.5)
        participants.append(ParticipantSpec(id=ids.next(), kind="car", lane_id="ring",
                                            s0=(base + j * ring_len / k
                                                + rng.uniform(-6.0, 6.0)) % ring_len,
                                            v0=v, v_max=v + rng.uniform(0.0, 0.8),
                                            aggressiveness=float(rng.uniform(0.0, 1.0))))
    n = len(participants)
    return ScenarioSpec(family="rab", seed=seed, map_name="rab",
                        traffic_density=100.0 * n / (ring_len + 120.0), count_range=(3, 6),
                        ego=ego, participants=tuple(participants))


def generate_scenario(family: str, seed: int,
                      params: VehicleParams | None = None) -> tuple[ScenarioSpec, World]:
    """Reproducible scenario: identical (family, seed) yields identical worlds."""
    if family in ("si", "usi"):
        spec = _crossroad(family, seed)
    elif family == "lane":
        spec = _lane(seed)
    elif family == "eoa":
        spec = _eoa(seed)
    elif family == "rab":
        spec = _rab(seed)
    else:
        raise ValueError(f"unknown scenario family {family!r}")
    return spec, build_world(spec, params=params)


def build_world(spec: ScenarioSpec, road: RoadMap | None = None,
                params: VehicleParams | None = None) -> World:
    road = road or load_preset(spec.map_name)
    params = params or VehicleParams()
    ego_lane = road.lanes[spec.ego.lane_id]
    pos = ego_lane.centerline.point_at(spec.ego.s0)
    psi = ego_lane.centerline.heading_at(spec.ego.s0)
    ego = ControlledVehicle(
        cid=0,
        state=VehicleState(x=float(pos[0]), y=float(pos[1]), v=spec.ego.v0, psi=psi, theta=0.0),
        params=params, v_max=spec.ego.v_max, goal=spec.ego.goal, lane_id=spec.ego.lane_id)
    participants = [
        Participant(id=p.id, kind=p.kind, lane_id=p.lane_id,
                    route=road.lanes[p.lane_id].centerline, s=p.s0, v=p.v0,
                    v_max=p.v_max, aggressiveness=p.aggressiveness)
        for p in spec.participants
    ]
    return World(road, [ego], participants)


def narrow_road_world(seed: int, params: VehicleParams | None = None) -> World:
    """Two controlled vehicles meeting head-on across the single-track middle."""
    rng = _rng("narrow", seed)
    road = load_preset("narrow")
    params = params or VehicleParams()
    a_s0 = rng.uniform(4.0, 10.0)
    b_s0 = rng.uniform(2.0, 8.0)
    lane_a = road.lanes["nr_a"].centerline
    lane_b = road.lanes["nr_b"].centerline
    pa = lane_a.point_at(a_s0)
    pb = lane_b.point_at(b_s0)
    veh_a = ControlledVehicle(
        cid=0, state=VehicleState(float(pa[0]), float(pa[1]), rng.uniform(5.0, 7.0),
                                  lane_a.heading_at(a_s0), 0.0),
        params=params, v_max=8.0, goal=_rect(108.0, 122.0, -5.0, 5.0), lane_id="nr_a")
    veh_b = ControlledVehicle(
        cid=1, state=VehicleState(float(pb[0]), float(pb[1]), rng.uniform(5.0, 7.0),
                                  lane_b.heading_at(b_s0), 0.0),
        params=params, v_max=8.0, goal=_rect(-2.0, 12.0, -5.0, 5.0), lane_id="nr_b")
    return World(road, [veh_a, veh_b], [])
