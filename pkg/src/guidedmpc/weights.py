"""Diagonal cost weights, the predefined selection pool, and action-space discretization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

Pair = tuple[float, float]

TRACKING, ACTION, SMOOTHNESS, SAFETY = "tracking", "action", "smoothness", "safety"
LEVEL_NAMES = ("low", "default", "high")
DEFAULT_LEVEL = 1


@dataclass(frozen=True)
class WeightSet:
    w_x: Pair = (1.0, 1.0)          # position residual (x, y)
    w_v: Pair = (0.4, 0.4)          # velocity residual (v_x, v_y)
    w_theta: Pair = (0.2, 1.0)      # steering / yaw residual
    w_s: Pair = (0.1, 1.0)          # action magnitude about the bias point
    w_g: Pair = (0.02, 0.1)         # first action difference
    w_l: Pair = (0.002, 0.01)       # second action difference
    w_saf: float = 2.2
    d_hat: float = 10.0             # desired clearance, m
    d_hat_by_kind: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        entries = [*self.w_x, *self.w_v, *self.w_theta, *self.w_s, *self.w_g, *self.w_l,
                   self.w_saf, self.d_hat]
        if any(e < 0 for e in entries):
            raise ValueError("weights must be non-negative")
        if not any(e > 0 for e in (*self.w_x, *self.w_v, *self.w_theta)):
            raise ValueError("at least one tracking weight must be positive")

    def clearance_for(self, kind: str) -> float:
        return self.d_hat_by_kind.get(kind, self.d_hat)

    def scaled(self, factor: float) -> "WeightSet":
        def sc(p: Pair) -> Pair:
            return (p[0] * factor, p[1] * factor)
        return replace(self, w_x=sc(self.w_x), w_v=sc(self.w_v), w_theta=sc(self.w_theta),
                       w_s=sc(self.w_s), w_g=sc(self.w_g), w_l=sc(self.w_l),
                       w_saf=self.w_saf * factor)


@dataclass(frozen=True)
class ActionBias:
    a_bias: float = 0.0
    theta_bias: float = 0.0
    active: bool = False

    INACTIVE = None  # set below


ActionBias.INACTIVE = ActionBias()


@dataclass(frozen=True)
class TrackingLevel:
    name: str
    w_x: Pair
    w_v: Pair
    w_theta: Pair


@dataclass(frozen=True)
class ActionLevel:
    name: str
    w_s: Pair


@dataclass(frozen=True)
class SmoothnessLevel:
    name: str
    w_g: Pair
    w_l: Pair


@dataclass(frozen=True)
class SafetyLevel:
    name: str
    w_saf: float
    d_hat: float


@dataclass(frozen=True)
class WeightSelection:
    tracking: int = DEFAULT_LEVEL
    action: int = DEFAULT_LEVEL
    smoothness: int = DEFAULT_LEVEL
    safety: int = DEFAULT_LEVEL

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.tracking, self.action, self.smoothness, self.safety)


@dataclass(frozen=True)
class WeightPool:
    tracking: tuple[TrackingLevel, ...]
    action: tuple[ActionLevel, ...]
    smoothness: tuple[SmoothnessLevel, ...]
    safety: tuple[SafetyLevel, ...]

    def sizes(self) -> tuple[int, int, int, int]:
        return (len(self.tracking), len(self.action), len(self.smoothness), len(self.safety))

    def compose(self, selection: WeightSelection) -> WeightSet:
        sizes = self.sizes()
        for idx, size, label in zip(selection.as_tuple(), sizes,
                                    (TRACKING, ACTION, SMOOTHNESS, SAFETY)):
            if not 0 <= idx < size:
                raise IndexError(f"{label} level {idx} out of range 0..{size - 1}")
        trk = self.tracking[selection.tracking]
        act = self.action[selection.action]
        smo = self.smoothness[selection.smoothness]
        saf = self.safety[selection.safety]
        return WeightSet(w_x=trk.w_x, w_v=trk.w_v, w_theta=trk.w_theta,
                         w_s=act.w_s, w_g=smo.w_g, w_l=smo.w_l,
                         w_saf=saf.w_saf, d_hat=saf.d_hat)


def default_weight_pool() -> WeightPool:
    """Three levels per category; the high action and safety levels dominate
    default tracking by well over an order of magnitude in the quadratic forms."""
    return WeightPool(
        tracking=(
            TrackingLevel("low", (0.25, 0.25), (0.1, 0.1), (0.05, 0.25)),
            TrackingLevel("default", (1.0, 1.0), (0.4, 0.4), (0.2, 1.0)),
            TrackingLevel("high", (4.0, 4.0), (1.6, 1.6), (0.8, 4.0)),
        ),
        action=(
            ActionLevel("low", (0.02, 0.2)),
            ActionLevel("default", (0.1, 1.0)),
            ActionLevel("high", (50.0, 50.0)),
        ),
        smoothness=(
            SmoothnessLevel("low", (0.004, 0.02), (0.0004, 0.002)),
            SmoothnessLevel("default", (0.02, 0.1), (0.002, 0.01)),
            SmoothnessLevel("high", (0.1, 0.5), (0.01, 0.05)),
        ),
        safety=(
            SafetyLevel("low", 0.3, 8.0),
            SafetyLevel("default", 2.2, 10.0),
            SafetyLevel("high", 5.0, 10.0),
        ),
    )


DEFAULT_SELECTION = WeightSelection()


@dataclass(frozen=True)
class ActionDiscretization:
    accel_edges: tuple[float, ...]
    steer_edges: tuple[float, ...]

    def __post_init__(self):
        for edges in (self.accel_edges, self.steer_edges):
            if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
                raise ValueError("interval edges must be strictly increasing")

    @property
    def accel_bins(self) -> int:
        return len(self.accel_edges) - 1

    @property
    def steer_bins(self) -> int:
        return len(self.steer_edges) - 1

    def accel_interval(self, index: int) -> Pair:
        if not 0 <= index < self.accel_bins:
            raise IndexError(f"accel interval {index} out of range")
        return (self.accel_edges[index], self.accel_edges[index + 1])

    def steer_interval(self, index: int) -> Pair:
        if not 0 <= index < self.steer_bins:
            raise IndexError(f"steer interval {index} out of range")
        return (self.steer_edges[index], self.steer_edges[index + 1])


def default_discretization(a_min: float = -6.0, a_max: float = 3.0,
                           theta_max: float = math.pi / 4, bins: int = 5) -> ActionDiscretization:
    accel = tuple(a_min + (a_max - a_min) * k / bins for k in range(bins + 1))
    steer = tuple(-theta_max + 2 * theta_max * k / bins for k in range(bins + 1))
    return ActionDiscretization(accel_edges=accel, steer_edges=steer)
