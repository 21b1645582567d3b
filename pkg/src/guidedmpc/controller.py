"""Receding-horizon controller: three-term cost over rollouts and a
finite-difference descent solver with backtracking line search and restarts."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _fast
from .bezier import ControlPolygon, ReferenceTrajectory, arc_positions
from .dynamics import Action, VehicleParams, VehicleState, rollout_batch
from .observation import ObservationBundle
from .weights import ActionBias, WeightSet

ALPHA_LADDER = tuple(2.0 * 0.5 ** k for k in range(15))
ARMIJO_C = 1e-4


class SolverDivergenceError(RuntimeError):
    """Non-finite cost during optimization: divergent rollout."""


@dataclass(frozen=True)
class CostBreakdown:
    c_trk: float
    c_act: float
    c_saf: float
    total: float

    def __post_init__(self):
        s = self.c_trk + self.c_act + self.c_saf
        if abs(self.total - s) > 1e-9 * max(1.0, abs(s)):
            raise ValueError("breakdown total inconsistent with its components")

    @classmethod
    def of(cls, c_trk: float, c_act: float, c_saf: float) -> "CostBreakdown":
        return cls(c_trk=c_trk, c_act=c_act, c_saf=c_saf, total=c_trk + c_act + c_saf)


@dataclass(frozen=True)
class SolverConfig:
    horizon: int = 30
    iterations: int = 60
    tolerance: float = 1e-4          # relative cost-decrease stop threshold
    restarts: int = 4
    fd_epsilon: float = 1e-3
    one_sided_safety: bool = True    # hinge only below the desired clearance

    def __post_init__(self):
        if self.horizon < 1 or self.iterations < 1 or self.tolerance <= 0 \
                or self.restarts < 0 or self.fd_epsilon <= 0:
            raise ValueError("invalid solver configuration")


@dataclass(frozen=True)
class ParticipantPath:
    positions: np.ndarray    # (steps, 2)
    clearance: float


@dataclass(frozen=True)
class SolveResult:
    first_action: Action
    planned_actions: np.ndarray      # (H, 2)
    breakdown: CostBreakdown
    cost_trace: tuple[float, ...]    # accepted-iterate costs, non-increasing


def _states_to_array(states: Sequence[VehicleState]) -> np.ndarray:
    return np.array([[s.x, s.y, s.v, s.psi, s.theta] for s in states])


def _reference_arrays(reference: ReferenceTrajectory, n: int) -> dict[str, np.ndarray]:
    samples = list(reference.samples[:n])
    while len(samples) < n:
        samples.append(samples[-1])
    x = np.array([r.x for r in samples])
    y = np.array([r.y for r in samples])
    v = np.array([r.v_ref for r in samples])
    psi = np.array([r.psi_ref for r in samples])
    theta = np.array([r.theta_ref for r in samples])
    return {"x": x, "y": y, "vx": v * np.cos(psi), "vy": v * np.sin(psi),
            "psi": psi, "theta": theta}


def _wrap(a: np.ndarray) -> np.ndarray:
    return np.pi - (np.pi - a) % (2.0 * np.pi)


def _tracking_batch(states: np.ndarray, ref: dict[str, np.ndarray], w: WeightSet) -> np.ndarray:
    dx = states[..., 0] - ref["x"]
    dy = states[..., 1] - ref["y"]
    dvx = states[..., 2] * np.cos(states[..., 3]) - ref["vx"]
    dvy = states[..., 2] * np.sin(states[..., 3]) - ref["vy"]
    dth = states[..., 4] - ref["theta"]
    dpsi = _wrap(states[..., 3] - ref["psi"])
    term = (w.w_x[0] * dx ** 2 + w.w_x[1] * dy ** 2
            + w.w_v[0] * dvx ** 2 + w.w_v[1] * dvy ** 2
            + w.w_theta[0] * dth ** 2 + w.w_theta[1] * dpsi ** 2)
    return term.sum(axis=-1)


def _action_batch(actions: np.ndarray, bias: ActionBias, w: WeightSet,
                  dt: float, prev: np.ndarray) -> np.ndarray:
    bias_vec = np.array([bias.a_bias, bias.theta_bias]) if bias.active else np.zeros(2)
    abar = actions - bias_vec
    padded = np.concatenate([np.broadcast_to(prev, actions[..., :1, :].shape), actions],
                            axis=-2)
    grad = np.diff(padded, axis=-2) / dt
    # second difference; motion before the previously executed action is taken as steady
    gpad = np.concatenate([np.zeros_like(grad[..., :1, :]), grad], axis=-2)
    curv = np.diff(gpad, axis=-2) / dt
    term = (w.w_s[0] * abar[..., 0] ** 2 + w.w_s[1] * abar[..., 1] ** 2
            + w.w_g[0] * grad[..., 0] ** 2 + w.w_g[1] * grad[..., 1] ** 2
            + w.w_l[0] * curv[..., 0] ** 2 + w.w_l[1] * curv[..., 1] ** 2)
    return term.sum(axis=-1)


def _safety_batch(states: np.ndarray, paths: Sequence[ParticipantPath], w: WeightSet,
                  one_sided: bool) -> np.ndarray:
    total = np.zeros(states.shape[:-2])
    for path in paths:
        d = np.hypot(states[..., 0] - path.positions[:, 0],
                     states[..., 1] - path.positions[:, 1])
        if one_sided:
            pen = np.clip(path.clearance - d, 0.0, None) ** 2
        else:
            pen = (d - path.clearance) ** 2
        total = total + pen.sum(axis=-1)
    return w.w_saf * total


def participant_paths(bundle: ObservationBundle, steps: int, dt: float,
                      w: WeightSet) -> list[ParticipantPath]:
    """Predicted positions of every active participant at the rollout timestamps.

    Prediction rows are arc-length sampled at the participant's current speed;
    inactive (masked) rows are skipped entirely.
    """
    paths = []
    for track in bundle.active_tracks():
        clearance = w.clearance_for(track.kind)
        cur = track.current
        if not track.predicted or cur.v < 0.05:
            pos = np.tile([cur.x, cur.y], (steps, 1))
        else:
            pts = tuple(zip(track.predicted[0::2], track.predicted[1::2]))
            polygon = ControlPolygon(points=pts)
            arcs = cur.v * dt * np.arange(steps)
            pos = arc_positions(polygon, arcs)
        paths.append(ParticipantPath(positions=pos, clearance=clearance))
    return paths


def cost_tracking(states: Sequence[VehicleState], reference: ReferenceTrajectory,
                  w: WeightSet) -> float:
    """Quadratic tracking cost, elementwise over min(len(states), len(samples))."""
    n = min(len(states), len(reference.samples))
    if n == 0:
        return 0.0
    arr = _states_to_array(states[:n])
    ref = _reference_arrays(reference, n)
    return float(_tracking_batch(arr, ref, w))


def cost_action(actions: Sequence[Action], bias: ActionBias, w: WeightSet,
                dt: float = 0.1, prev_action: Action | None = None) -> float:
    """Quadratic action cost about the bias point plus difference penalties.

    The previously executed action seeds the first difference; when omitted it
    defaults to the first planned action (no replanning-boundary penalty).
    """
    if not actions:
        raise ValueError("actions must be non-empty")
    arr = np.array([[a.a, a.theta_cmd] for a in actions])
    prev = arr[0] if prev_action is None else np.array([prev_action.a, prev_action.theta_cmd])
    return float(_action_batch(arr, bias, w, dt, prev))


def cost_safety(states: Sequence[VehicleState], bundle: ObservationBundle, w: WeightSet,
                dt: float = 0.1, one_sided: bool = True) -> float:
    """One-sided clearance hinge summed over steps and active participants."""
    if not states:
        return 0.0
    paths = participant_paths(bundle, len(states), dt, w)
    if not paths:
        return 0.0
    arr = _states_to_array(states)
    return float(_safety_batch(arr, paths, w, one_sided))


def total_cost(states: Sequence[VehicleState], actions: Sequence[Action],
               reference: ReferenceTrajectory, bundle: ObservationBundle,
               bias: ActionBias, w: WeightSet, dt: float = 0.1,
               prev_action: Action | None = None,
               one_sided: bool = True) -> CostBreakdown:
    """Plan cost: tracking and safety over the resulting states (skipping the
    fixed initial state), action terms over the applied sequence."""
    c_trk = cost_tracking(states[1:], _shift_reference(reference), w)
    c_act = cost_action(actions, bias, w, dt=dt, prev_action=prev_action)
    c_saf = _plan_safety(states, bundle, w, dt, one_sided)
    return CostBreakdown.of(c_trk, c_act, c_saf)


def _shift_reference(reference: ReferenceTrajectory) -> ReferenceTrajectory:
    if len(reference.samples) > 1:
        return ReferenceTrajectory(samples=reference.samples[1:], dt=reference.dt)
    return reference


def _plan_safety(states, bundle, w, dt, one_sided) -> float:
    paths = participant_paths(bundle, len(states), dt, w)
    if not paths or len(states) < 2:
        return 0.0
    arr = _states_to_array(states[1:])
    trimmed = [ParticipantPath(p.positions[1:], p.clearance) for p in paths]
    return float(_safety_batch(arr, trimmed, w, one_sided))


class _PlanCost:
    """Batched evaluation of the plan cost for candidate action sequences."""

    def __init__(self, initial: VehicleState, reference: ReferenceTrajectory,
                 paths: list[ParticipantPath], bias: ActionBias, w: WeightSet,
                 params: VehicleParams, horizon: int, prev_action: np.ndarray,
                 one_sided: bool):
        self.initial = initial
        self.params = params
        self.h = horizon
        self.bias = bias
        self.w = w
        self.prev = prev_action
        self.one_sided = one_sided
        ref = _reference_arrays(reference, horizon + 1)
        self.ref_tail = {k: v[1:] for k, v in ref.items()}
        self.paths_tail = [ParticipantPath(p.positions[1:], p.clearance) for p in paths]
        self.lo = np.array([params.a_min, -params.theta_max])
        self.hi = np.array([params.a_max, params.theta_max])
        if _fast.AVAILABLE:
            r = self.ref_tail
            self._ref_mat = np.column_stack([r["x"], r["y"], r["vx"], r["vy"],
                                             r["psi"], r["theta"]])
            self._wvec = np.array([*w.w_x, *w.w_v, *w.w_theta, *w.w_s, *w.w_g, *w.w_l])
            self._bias_vec = (np.array([bias.a_bias, bias.theta_bias]) if bias.active
                              else np.zeros(2))
            if self.paths_tail:
                self._path_mat = np.stack([p.positions for p in self.paths_tail])
                self._clear_vec = np.array([p.clearance for p in self.paths_tail])
            else:
                self._path_mat = np.zeros((0, horizon, 2))
                self._clear_vec = np.zeros(0)

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lo, self.hi)

    def terms(self, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if _fast.AVAILABLE:
            p = self.params
            out = _fast.plan_cost_terms(
                np.ascontiguousarray(batch, dtype=float), self.initial.as_array(),
                p.wheelbase, p.dt, p.theta_max, p.a_min, p.a_max,
                p.steering_rate_max * p.dt, self._ref_mat, self._wvec,
                self.w.w_saf, self.one_sided, self._bias_vec, self.prev,
                self._path_mat, self._clear_vec)
            return out[:, 0], out[:, 1], out[:, 2]
        u = np.clip(batch, self.lo, self.hi)
        states = rollout_batch(self.initial, u, self.params)
        c_trk = _tracking_batch(states[:, 1:], self.ref_tail, self.w)
        c_act = _action_batch(u, self.bias, self.w, self.params.dt, self.prev)
        c_saf = _safety_batch(states[:, 1:], self.paths_tail, self.w, self.one_sided)
        return c_trk, c_act, c_saf

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        c_trk, c_act, c_saf = self.terms(batch)
        total = c_trk + c_act + c_saf
        if not np.all(np.isfinite(total)):
            raise SolverDivergenceError("divergent rollout")
        return total


def _gradient(cost: _PlanCost, u: np.ndarray, eps: float) -> np.ndarray:
    h, two = u.shape
    n = h * two
    batch = np.tile(u, (2 * n, 1, 1))
    flat = batch.reshape(2 * n, n)
    idx = np.arange(n)
    flat[2 * idx, idx] += eps
    flat[2 * idx + 1, idx] -= eps
    costs = cost(batch)
    grad = (costs[0::2] - costs[1::2]) / (2.0 * eps)
    return grad.reshape(h, two)


def _descend(cost: _PlanCost, u0: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, float, list[float]]:
    u = cost.clip(u0)
    j = float(cost(u[None])[0])
    trace = [j]
    alphas = np.array(ALPHA_LADDER)
    for _ in range(cfg.iterations):
        grad = _gradient(cost, u, cfg.fd_epsilon)
        gn = float(np.sqrt((grad ** 2).sum()))
        if gn < 1e-12:
            break
        direction = grad / gn
        cands = cost.clip(u[None] - alphas[:, None, None] * direction[None])
        js = cost(cands)
        accept = js <= j - ARMIJO_C * alphas * gn
        if not np.any(accept):
            break
        k = int(np.argmax(accept))   # largest alpha satisfying the decrease condition
        j_new = float(js[k])
        u = cands[k]
        rel = (j - j_new) / max(abs(j), 1e-300)
        j = j_new
        trace.append(j)
        if rel < cfg.tolerance:
            break
    return u, j, trace


def solve(initial: VehicleState, reference: ReferenceTrajectory, bundle: ObservationBundle,
          bias: ActionBias, w: WeightSet, config: SolverConfig,
          params: VehicleParams | None = None,
          warm_start: np.ndarray | None = None,
          prev_action: Action | None = None,
          seed: int = 0) -> SolveResult:
    """Minimize the horizon cost over the action sequence and return its head.

    The warm start is the previous solution, shifted one step with the last
    element repeated. Deterministic given identical inputs and seed.
    """
    params = params or VehicleParams()
    h = config.horizon
    paths = participant_paths(bundle, h + 1, params.dt, w)
    prev = (np.zeros(2) if prev_action is None
            else np.array([prev_action.a, prev_action.theta_cmd]))
    cost = _PlanCost(initial, reference, paths, bias, w, params, h, prev,
                     config.one_sided_safety)

    if warm_start is not None and warm_start.shape == (h, 2):
        u0 = np.vstack([warm_start[1:], warm_start[-1:]])
    else:
        u0 = np.zeros((h, 2))

    best_u, best_j, trace = _descend(cost, u0, config)
    # near standstill the speed clamp flattens the cost around braking plans
    # (probes keep v pinned at 0), so also probe a zero-sequence start; a short
    # descent is enough to reveal the better basin, the next warm start refines
    if initial.v < 1.5 and np.any(u0 != 0.0):
        probe_cfg = replace(config, iterations=min(config.iterations, 15))
        u_z, j_z, t_z = _descend(cost, np.zeros((h, 2)), probe_cfg)
        if j_z < best_j:
            best_u, best_j, trace = u_z, j_z, t_z
    rng = np.random.default_rng(seed)
    for _ in range(config.restarts):
        noise = rng.normal(0.0, 1.0, size=(h, 2)) * np.array([0.5, 0.05])
        u_r, j_r, t_r = _descend(cost, best_u + noise, config)
        if j_r < best_j:
            best_u, best_j = u_r, j_r
            trace = t_r

    c_trk, c_act, c_saf = cost.terms(best_u[None])
    breakdown = CostBreakdown.of(float(c_trk[0]), float(c_act[0]), float(c_saf[0]))
    first = Action(a=float(best_u[0, 0]), theta_cmd=float(best_u[0, 1]))
    return SolveResult(first_action=first, planned_actions=best_u,
                       breakdown=breakdown, cost_trace=tuple(trace))
