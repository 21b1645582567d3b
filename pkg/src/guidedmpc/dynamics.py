"""Kinematic bicycle plant: single-step transition and action-sequence rollout."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import wrap_angle


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.8      # m
    dt: float = 0.1             # s
    theta_max: float = math.pi / 4
    a_min: float = -6.0         # m/s^2
    a_max: float = 3.0          # m/s^2
    steering_rate_max: float = 0.8  # rad/s

    def __post_init__(self):
        if self.wheelbase <= 0 or self.dt <= 0:
            raise ValueError("wheelbase and dt must be positive")


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    v: float        # scalar speed, m/s, never negative
    psi: float      # yaw, rad, normalized to (-pi, pi]
    theta: float    # steering angle, rad

    def __post_init__(self):
        object.__setattr__(self, "v", max(0.0, float(self.v)))
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def v_x(self) -> float:
        return self.v * math.cos(self.psi)

    @property
    def v_y(self) -> float:
        return self.v * math.sin(self.psi)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.psi, self.theta])


@dataclass(frozen=True)
class Action:
    a: float          # longitudinal acceleration, m/s^2
    theta_cmd: float  # commanded steering angle, rad

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.theta_cmd])


def step(state: VehicleState, action: Action, params: VehicleParams) -> VehicleState:
    """Advance one control period; out-of-range commands are clamped, not rejected."""
    a = min(max(action.a, params.a_min), params.a_max)
    cmd = min(max(action.theta_cmd, -params.theta_max), params.theta_max)
    dt = params.dt

    x = state.x + state.v * math.cos(state.psi) * dt
    y = state.y + state.v * math.sin(state.psi) * dt
    psi = state.psi + state.v / params.wheelbase * math.tan(state.theta) * dt
    v = max(0.0, state.v + a * dt)
    d_theta = min(max(cmd - state.theta, -params.steering_rate_max * dt),
                  params.steering_rate_max * dt)
    theta = state.theta + d_theta
    theta = min(max(theta, -params.theta_max), params.theta_max)
    return VehicleState(x=x, y=y, v=v, psi=psi, theta=theta)


def rollout(state: VehicleState, actions: Sequence[Action],
            params: VehicleParams) -> list[VehicleState]:
    """Chained step() applications; returns len(actions)+1 states, initial included."""
    states = [state]
    for act in actions:
        states.append(step(states[-1], act, params))
    return states


def rollout_batch(state: VehicleState, actions: np.ndarray,
                  params: VehicleParams) -> np.ndarray:
    """Vectorized rollout of a batch of action sequences.

    actions has shape (B, H, 2) with columns (a, theta_cmd); the result has
    shape (B, H+1, 5) with columns (x, y, v, psi, theta). Uses the same update
    order as step().
    """
    B, H, _ = actions.shape
    dt = params.dt
    rate = params.steering_rate_max * dt
    a_seq = np.clip(actions[:, :, 0], params.a_min, params.a_max)
    cmd_seq = np.clip(actions[:, :, 1], -params.theta_max, params.theta_max)
    out = np.empty((B, H + 1, 5))
    x = np.full(B, state.x)
    y = np.full(B, state.y)
    v = np.full(B, state.v)
    psi = np.full(B, state.psi)
    theta = np.full(B, state.theta)
    out[:, 0, 0] = x
    out[:, 0, 1] = y
    out[:, 0, 2] = v
    out[:, 0, 3] = psi
    out[:, 0, 4] = theta
    for k in range(H):
        x = x + v * np.cos(psi) * dt
        y = y + v * np.sin(psi) * dt
        psi = np.pi - (np.pi - (psi + v / params.wheelbase * np.tan(theta) * dt)) % (2 * np.pi)
        v = np.maximum(0.0, v + a_seq[:, k] * dt)
        d_theta = np.minimum(np.maximum(cmd_seq[:, k] - theta, -rate), rate)
        theta = np.minimum(np.maximum(theta + d_theta, -params.theta_max), params.theta_max)
        out[:, k + 1, 0] = x
        out[:, k + 1, 1] = y
        out[:, k + 1, 2] = v
        out[:, k + 1, 3] = psi
        out[:, k + 1, 4] = theta
    return out
