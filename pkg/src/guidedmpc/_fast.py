"""Optional numba acceleration of the batched plan-cost evaluation.

The kernel mirrors the numpy reference path in controller.py exactly (same
operation order, no fastmath) so results stay deterministic and consistent.
"""
from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    AVAILABLE = True
except ImportError:  # pragma: no cover - numba is present in supported envs
    AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def plan_cost_terms(u, init, wheelbase, dt, theta_max, a_min, a_max, rate,
                    ref, wvec, w_saf, one_sided, bias, prev, paths, clear):
    """Batched (c_trk, c_act, c_saf) for raw action sequences.

    u: (B, H, 2); ref: (H, 6) tail rows (x, y, vx, vy, psi, theta);
    paths: (P, H, 2) tail positions; clear: (P,).
    """
    B, H, _ = u.shape
    P = paths.shape[0]
    out = np.empty((B, 3))
    for b in range(B):
        x = init[0]
        y = init[1]
        v = init[2]
        psi = init[3]
        theta = init[4]
        c_trk = 0.0
        c_act = 0.0
        c_saf = 0.0
        prev_a = prev[0]
        prev_t = prev[1]
        pg_a = 0.0
        pg_t = 0.0
        for k in range(H):
            a = u[b, k, 0]
            if a < a_min:
                a = a_min
            elif a > a_max:
                a = a_max
            cmd = u[b, k, 1]
            if cmd < -theta_max:
                cmd = -theta_max
            elif cmd > theta_max:
                cmd = theta_max

            # action magnitude about the bias point, then difference penalties
            da = a - bias[0]
            dtheta_cmd = cmd - bias[1]
            c_act += wvec[6] * da * da + wvec[7] * dtheta_cmd * dtheta_cmd
            g_a = (a - prev_a) / dt
            g_t = (cmd - prev_t) / dt
            c_act += wvec[8] * g_a * g_a + wvec[9] * g_t * g_t
            l_a = (g_a - pg_a) / dt
            l_t = (g_t - pg_t) / dt
            c_act += wvec[10] * l_a * l_a + wvec[11] * l_t * l_t
            prev_a = a
            prev_t = cmd
            pg_a = g_a
            pg_t = g_t

            # plant update, same order as dynamics.step
            x = x + v * math.cos(psi) * dt
            y = y + v * math.sin(psi) * dt
            psi = math.pi - (math.pi - (psi + v / wheelbase * math.tan(theta) * dt)) % TWO_PI
            v_next = v + a * dt
            v = v_next if v_next > 0.0 else 0.0
            d_step = cmd - theta
            if d_step < -rate:
                d_step = -rate
            elif d_step > rate:
                d_step = rate
            theta = theta + d_step
            if theta < -theta_max:
                theta = -theta_max
            elif theta > theta_max:
                theta = theta_max

            dx = x - ref[k, 0]
            dy = y - ref[k, 1]
            dvx = v * math.cos(psi) - ref[k, 2]
            dvy = v * math.sin(psi) - ref[k, 3]
            dpsi = math.pi - (math.pi - (psi - ref[k, 4])) % TWO_PI
            dth = theta - ref[k, 5]
            c_trk += (wvec[0] * dx * dx + wvec[1] * dy * dy
                      + wvec[2] * dvx * dvx + wvec[3] * dvy * dvy
                      + wvec[5] * dpsi * dpsi + wvec[4] * dth * dth)

            for p in range(P):
                ddx = x - paths[p, k, 0]
                ddy = y - paths[p, k, 1]
                dist = math.sqrt(ddx * ddx + ddy * ddy)
                if one_sided:
                    pen = clear[p] - dist
                    if pen > 0.0:
                        c_saf += pen * pen
                else:
                    pen = dist - clear[p]
                    c_saf += pen * pen
        out[b, 0] = c_trk
        out[b, 1] = c_act
        out[b, 2] = c_saf * w_saf
    return out
