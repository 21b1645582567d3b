"""Observation assembly: static map view, participant history/prediction rows, attention masking."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .roads import Lane, Zone

HISTORY_WINDOW = 10       # ticks of history kept per participant
PREDICTION_POINTS = 7     # control points per candidate path, module-wide

PARTICIPANT_KINDS = ("car", "bicycle", "pedestrian")


@dataclass(frozen=True)
class TrackPoint:
    x: float
    y: float
    v: float
    heading: float

    ZERO = None  # set below


TrackPoint.ZERO = TrackPoint(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SignalView:
    id: str
    position: tuple[float, float]
    state: str                      # red | yellow | green
    governs: tuple[str, ...]


@dataclass(frozen=True)
class StaticObservation:
    lanes: tuple[Lane, ...]
    signals: tuple[SignalView, ...] = ()
    zones: tuple[Zone, ...] = ()

    def __post_init__(self):
        ids = [lane.id for lane in self.lanes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate lane ids in static observation")

    @property
    def waypoints(self) -> tuple[tuple[float, float], ...]:
        pts = []
        for lane in self.lanes:
            pts.extend((float(p[0]), float(p[1])) for p in lane.centerline.points)
        return tuple(pts)

    def lane(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)


@dataclass(frozen=True)
class ParticipantTrack:
    id: int
    kind: str
    history: tuple[TrackPoint, ...]          # oldest first, length <= HISTORY_WINDOW
    predicted: tuple[float, ...]             # flattened (x0,y0,...,x_{n-1},y_{n-1})
    v_max: float
    active: bool = True

    def __post_init__(self):
        if self.kind not in PARTICIPANT_KINDS:
            raise ValueError(f"unknown participant kind {self.kind!r}")
        if len(self.history) > HISTORY_WINDOW:
            raise ValueError("history longer than window")
        if self.predicted and len(self.predicted) != 2 * PREDICTION_POINTS:
            raise ValueError("prediction row must hold 2n control-point coordinates")

    @property
    def current(self) -> TrackPoint:
        return self.history[-1]


@dataclass(frozen=True)
class AttentionMask:
    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("mask bits must be 0 or 1")

    @classmethod
    def ones(cls, n: int) -> "AttentionMask":
        return cls(bits=(1,) * n)


@dataclass(frozen=True)
class ObservationBundle:
    static_obs: StaticObservation
    dynamic: tuple[ParticipantTrack, ...]
    timestamp: float

    def active_tracks(self) -> tuple[ParticipantTrack, ...]:
        return tuple(t for t in self.dynamic if t.active)


def build_history(snapshots: Sequence[Mapping[int, TrackPoint]],
                  window: int = HISTORY_WINDOW) -> dict[int, tuple[TrackPoint, ...]]:
    """Per-participant history rows from chronological snapshots.

    Participants present in the latest snapshot get exactly `window` entries;
    short histories are front-padded by repeating their oldest known state.
    """
    if not snapshots:
        return {}
    recent = snapshots[-window:]
    latest = recent[-1]
    rows: dict[int, tuple[TrackPoint, ...]] = {}
    for pid in sorted(latest):
        seen = [snap[pid] for snap in recent if pid in snap]
        pad = window - len(seen)
        rows[pid] = tuple([seen[0]] * pad + seen)
    return rows


def predict_participant(track: ParticipantTrack, candidates: Sequence,
                        selection: int) -> tuple[float, ...]:
    """Flattened control-point row for the chosen candidate path."""
    if not 0 <= selection < len(candidates):
        raise IndexError(f"candidate selection {selection} out of range")
    points = candidates[selection].points
    if len(points) != PREDICTION_POINTS:
        raise ValueError("candidate arity differs from the module-wide control-point count")
    flat: list[float] = []
    for x, y in points:
        flat.extend((float(x), float(y)))
    return tuple(flat)


def apply_mask(tracks: Sequence[ParticipantTrack],
               mask: AttentionMask) -> tuple[ParticipantTrack, ...]:
    """Zero out and deactivate rows whose mask bit is 0; order preserved."""
    if len(tracks) != len(mask.bits):
        raise ValueError(f"mask length {len(mask.bits)} != track count {len(tracks)}")
    out = []
    for track, bit in zip(tracks, mask.bits):
        if bit:
            out.append(track)
        else:
            zeros = (0.0,) * len(track.predicted)
            out.append(replace(track,
                               history=(TrackPoint.ZERO,) * len(track.history),
                               predicted=zeros,
                               active=False))
    return tuple(out)


def assemble(static_obs: StaticObservation, tracks: Sequence[ParticipantTrack],
             mask: AttentionMask, timestamp: float) -> ObservationBundle:
    masked = apply_mask(tracks, mask)
    return ObservationBundle(static_obs=static_obs, dynamic=masked, timestamp=timestamp)
