"""Declarative road maps: lanes, signal programs, conflict zones, preset loader.

Preset files are plain text, one directive per line, '#' comments allowed:

    LANE <id> WIDTH <w> [CLOSED] POINTS x,y x,y ...
    LINK <from_id> <to_id>
    SIGNAL <id> AT x,y GOVERNS lane_a,lane_b CYCLE green:12 yellow:3 red:15 [OFFSET s]
    ZONE <kind> CENTER x,y RADIUS r
    BAY x,y

Bundled presets live in guidedmpc/presets/.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

from .geometry import Polyline

SIGNAL_STATES = ("red", "yellow", "green")


@dataclass(frozen=True)
class Lane:
    id: str
    width: float
    centerline: Polyline

    @property
    def closed(self) -> bool:
        return self.centerline.closed


@dataclass(frozen=True)
class SignalProgram:
    id: str
    position: tuple[float, float]
    governs: tuple[str, ...]
    cycle: tuple[tuple[str, float], ...]   # (state, duration) pairs, repeated forever
    offset: float = 0.0

    def state_at(self, t: float) -> str:
        total = sum(d for _, d in self.cycle)
        phase = (t + self.offset) % total
        for state, dur in self.cycle:
            if phase < dur:
                return state
            phase -= dur
        return self.cycle[-1][0]


@dataclass(frozen=True)
class Zone:
    kind: str                     # intersection | roundabout | narrow
    center: tuple[float, float]
    radius: float

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return math.hypot(x - self.center[0], y - self.center[1]) <= self.radius + margin

    def distance(self, x: float, y: float) -> float:
        """Signed distance to the zone boundary (negative inside)."""
        return math.hypot(x - self.center[0], y - self.center[1]) - self.radius


@dataclass
class RoadMap:
    name: str
    lanes: dict[str, Lane] = field(default_factory=dict)
    links: list[tuple[str, str]] = field(default_factory=list)
    signals: list[SignalProgram] = field(default_factory=list)
    zones: list[Zone] = field(default_factory=list)
    bays: list[tuple[float, float]] = field(default_factory=list)

    def lane_entry_arc(self, lane_id: str, zone: Zone) -> float | None:
        """Arc position where a lane first enters a zone, or None if it never does."""
        lane = self.lanes[lane_id]
        line = lane.centerline
        step = 0.5
        s = 0.0
        while s <= line.length:
            p = line.point_at(s)
            if zone.contains(p[0], p[1]):
                return s
            s += step
        return None


class MapFormatError(ValueError):
    pass


def _parse_xy(token: str) -> tuple[float, float]:
    parts = token.split(",")
    if len(parts) != 2:
        raise MapFormatError(f"expected x,y pair, got {token!r}")
    return float(parts[0]), float(parts[1])


def parse_map(text: str, name: str = "map") -> RoadMap:
    road = RoadMap(name=name)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0].upper()
        try:
            if kind == "LANE":
                lane_id = tokens[1]
                if tokens[2].upper() != "WIDTH":
                    raise MapFormatError("LANE expects WIDTH")
                width = float(tokens[3])
                rest = tokens[4:]
                closed = False
                if rest and rest[0].upper() == "CLOSED":
                    closed = True
                    rest = rest[1:]
                if not rest or rest[0].upper() != "POINTS":
                    raise MapFormatError("LANE expects POINTS")
                pts = [_parse_xy(tok) for tok in rest[1:]]
                road.lanes[lane_id] = Lane(lane_id, width, Polyline(pts, closed=closed))
            elif kind == "LINK":
                road.links.append((tokens[1], tokens[2]))
            elif kind == "SIGNAL":
                sig_id = tokens[1]
                i = tokens.index("AT") if "AT" in tokens else tokens.index("at")
                pos = _parse_xy(tokens[i + 1])
                g = tokens[tokens.index("GOVERNS") + 1].split(",")
                c = tokens.index("CYCLE")
                cycle = []
                offset = 0.0
                j = c + 1
                while j < len(tokens):
                    if tokens[j].upper() == "OFFSET":
                        offset = float(tokens[j + 1])
                        break
                    state, dur = tokens[j].split(":")
                    if state not in SIGNAL_STATES:
                        raise MapFormatError(f"unknown signal state {state!r}")
                    cycle.append((state, float(dur)))
                    j += 1
                road.signals.append(SignalProgram(sig_id, pos, tuple(g), tuple(cycle), offset))
            elif kind == "ZONE":
                zkind = tokens[1]
                center = _parse_xy(tokens[tokens.index("CENTER") + 1])
                radius = float(tokens[tokens.index("RADIUS") + 1])
                road.zones.append(Zone(zkind, center, radius))
            elif kind == "BAY":
                road.bays.append(_parse_xy(tokens[1]))
            else:
                raise MapFormatError(f"unknown directive {tokens[0]!r}")
        except (IndexError, ValueError) as exc:
            raise MapFormatError(f"{name}:{lineno}: {exc}") from exc
    if not road.lanes:
        raise MapFormatError(f"{name}: no lanes defined")
    return road


def load_preset(name: str) -> RoadMap:
    """Load one of the bundled map presets by short name (e.g. 'usi')."""
    ref = resources.files("guidedmpc").joinpath("presets", f"{name}.map")
    try:
        text = ref.read_text()
    except FileNotFoundError as exc:
        raise MapFormatError(f"no bundled map preset named {name!r}") from exc
    return parse_map(text, name=name)


def load_suite_manifest() -> dict[str, list[int]]:
    """Seeds per scenario family, as shipped in presets/suites.txt."""
    text = resources.files("guidedmpc").joinpath("presets", "suites.txt").read_text()
    suites: dict[str, list[int]] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        family, _, seeds = line.partition(":")
        suites[family.strip()] = [int(tok) for tok in seeds.split()]
    return suites
