"""Compiled batch rollout and cost evaluation used by the planner.

Each (candidate, map) pair is rolled out independently, so results do not
depend on the number of threads numba uses.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# layout of the packed parameter vector
P_ORIGIN_X, P_ORIGIN_Y, P_CELL, P_DT, P_GOAL_X, P_GOAL_Y = 0, 1, 2, 3, 4, 5
P_GOAL_R, P_S_DEFAULT, P_W_DIST, P_V_MAX, P_W_MAX = 6, 7, 8, 9, 10
N_PARAMS = 11


@njit(cache=True, inline="always")
def _cell(x, y, ox, oy, cell, h, w):
    col = math.floor((x - ox) / cell)
    row = math.floor((y - oy) / cell)
    if row < 0 or row >= h or col < 0 or col >= w:
        return -1, -1
    return int(row), int(col)


@njit(cache=True)
def _rollout_cost(x0, u, lin, ang, penalty, use_penalty, p):
    h, w = lin.shape
    ox, oy, cell, dt = p[P_ORIGIN_X], p[P_ORIGIN_Y], p[P_CELL], p[P_DT]
    gx, gy, gr = p[P_GOAL_X], p[P_GOAL_Y], p[P_GOAL_R]
    s_default, w_dist, vmax, wmax = p[P_S_DEFAULT], p[P_W_DIST], p[P_V_MAX], p[P_W_MAX]
    x, y, yaw = x0[0], x0[1], x0[2]
    done = False
    cost = 0.0
    for t in range(u.shape[0]):
        d = math.sqrt((gx - x) ** 2 + (gy - y) ** 2)
        if d <= gr:
            done = True
        if not done:
            cost += dt
        cost += w_dist * d
        row, col = _cell(x, y, ox, oy, cell, h, w)
        if row >= 0:
            if use_penalty:
                cost += penalty[row, col]
            psi_lin = lin[row, col]
            psi_ang = ang[row, col]
        else:
            psi_lin = 0.0
            psi_ang = 0.0
        v = min(max(u[t, 0], -vmax), vmax)
        om = min(max(u[t, 1], -wmax), wmax)
        x, y, yaw = (
            x + dt * psi_lin * v * math.cos(yaw),
            y + dt * psi_lin * v * math.sin(yaw),
            yaw + dt * psi_ang * om,
        )
    d = math.sqrt((gx - x) ** 2 + (gy - y) ** 2)
    if d <= gr:
        done = True
    if not done:
        cost += d / s_default
    return cost


@njit(cache=True, parallel=True)
def batch_costs(x0, controls, lin_maps, ang_maps, penalty, use_penalty, params):
    """Costs of shape ``(N, M)`` for N control sequences over M traction maps."""
    n = controls.shape[0]
    m = lin_maps.shape[0]
    out = np.empty((n, m))
    # map-major order keeps one traction map hot in cache across candidates
    for k in prange(n * m):
        j = k // n
        i = k - j * n
        out[i, j] = _rollout_cost(x0, controls[i], lin_maps[j], ang_maps[j], penalty, use_penalty, params)
    return out


@njit(cache=True)
def batch_states(x0, controls, lin, ang, params):
    """State rollouts ``(N, T + 1, 3)`` on a single traction map."""
    n, horizon = controls.shape[0], controls.shape[1]
    h, w = lin.shape
    ox, oy, cell, dt = params[P_ORIGIN_X], params[P_ORIGIN_Y], params[P_CELL], params[P_DT]
    vmax, wmax = params[P_V_MAX], params[P_W_MAX]
    out = np.empty((n, horizon + 1, 3))
    for i in range(n):
        x, y, yaw = x0[0], x0[1], x0[2]
        out[i, 0, 0], out[i, 0, 1], out[i, 0, 2] = x, y, yaw
        for t in range(horizon):
            row, col = _cell(x, y, ox, oy, cell, h, w)
            psi_lin, psi_ang = 0.0, 0.0
            if row >= 0:
                psi_lin, psi_ang = lin[row, col], ang[row, col]
            v = min(max(controls[i, t, 0], -vmax), vmax)
            om = min(max(controls[i, t, 1], -wmax), wmax)
            x, y, yaw = (
                x + dt * psi_lin * v * math.cos(yaw),
                y + dt * psi_lin * v * math.sin(yaw),
                yaw + dt * psi_ang * om,
            )
            out[i, t + 1, 0], out[i, t + 1, 1], out[i, t + 1, 2] = x, y, yaw
    return out


@njit(cache=True)
def draw_centers(probs, known, u):
    """Inverse-CDF draws of bin centers.

    ``probs`` is (H, W, B), ``u`` is (M, H, W) uniforms; unknown cells get 0.
    """
    m, h, w = u.shape
    b = probs.shape[2]
    cdf = np.empty((h, w, b))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for q in range(b):
                acc += probs[r, c, q]
                cdf[r, c, q] = acc
    out = np.zeros((m, h, w))
    for s in range(m):
        for r in range(h):
            for c in range(w):
                if not known[r, c]:
                    continue
                target = u[s, r, c] * cdf[r, c, b - 1]
                q = 0
                while q < b - 1 and target >= cdf[r, c, q]:
                    q += 1
                out[s, r, c] = (q + 0.5) / b
    return out
