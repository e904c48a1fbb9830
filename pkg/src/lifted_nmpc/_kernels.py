"""Compiled single-shooting objective.

Mirrors ``chain_states`` + ``lifted_cost_array`` (and the sampled
conventional cost) for plants that provide a numba vector field
``kernel(x, u, params) -> dx`` on 1-D arrays. The numpy path remains the
reference implementation; tests check the two agree.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MODE_INTEGRAL = 0
MODE_PER_SAMPLE = 1
MODE_SAMPLED = 2


@njit(cache=True)
def vdp_kernel(x, u, p):
    out = np.empty(2)
    out[0] = x[1]
    out[1] = -p[0] * (x[0] * x[0] - 1.0) * x[1] - x[0] + u[0]
    return out


@njit(cache=True)
def cartpole_kernel(x, u, p):
    g, l, m_c, m_p = p[0], p[1], p[2], p[3]
    th, v, w = x[1], x[2], x[3]
    s = np.sin(th)
    c = np.cos(th)
    den = m_c + m_p * s * s
    out = np.empty(4)
    out[0] = v
    out[1] = w
    out[2] = (-m_p * l * w * w * s + m_p * g * s * c + u[0]) / den
    out[3] = (-m_p * l * w * w * s * c + (m_c + m_p) * g * s + u[0] * c) / (l * den)
    return out


@njit
def _quad(x, W):
    acc = 0.0
    for i in range(x.shape[0]):
        row = 0.0
        for j in range(x.shape[0]):
            row += W[i, j] * x[j]
        acc += x[i] * row
    return acc


@njit
def _box_sq(x, lo, hi):
    acc = 0.0
    for i in range(x.shape[0]):
        if x[i] < lo[i]:
            acc += (lo[i] - x[i]) ** 2
        elif x[i] > hi[i]:
            acc += (x[i] - hi[i]) ** 2
    return acc


@njit
def _rk4(f, x, u, p, h):
    k1 = f(x, u, p)
    k2 = f(x + 0.5 * h * k1, u, p)
    k3 = f(x + 0.5 * h * k2, u, p)
    k4 = f(x + h * k3, u, p)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit
def objective_batch(f, p, x0, V, T, nprime, substeps, Q, R, Qf, mode, xlo, xhi, flo, fhi, rho):
    """Objective for each row of ``V`` (shape ``(B, N, M, m)``); NaN on blow-up."""
    B, N, M, m = V.shape
    steps = nprime * substeps
    h = T / steps
    per_segment = steps // M
    gh = T / nprime
    out = np.empty(B)
    for b in range(B):
        x = x0.copy()
        total = 0.0
        pen = 0.0
        for k in range(N):
            effort = 0.0
            for i in range(M):
                effort += _quad(V[b, k, i], R)
            if mode == MODE_SAMPLED:
                total += _quad(x, Q) + effort
            simp = _quad(x, Q)
            if rho > 0.0:
                pen += _box_sq(x, xlo, xhi)
            for j in range(nprime):
                for s in range(substeps):
                    i = (j * substeps + s) // per_segment
                    x = _rk4(f, x, V[b, k, i], p, h)
                wj = 1.0 if j == nprime - 1 else (4.0 if j % 2 == 0 else 2.0)
                simp += wj * _quad(x, Q)
                if rho > 0.0 and mode != MODE_SAMPLED:
                    pen += _box_sq(x, xlo, xhi)
            if mode == MODE_INTEGRAL:
                total += gh / 3.0 * simp + (T / M) * effort
            elif mode == MODE_PER_SAMPLE:
                total += gh / 3.0 * simp / T + effort / M
        total += _quad(x, Qf)
        if rho > 0.0:
            pen += _box_sq(x, flo, fhi)
        val = total + rho * pen
        out[b] = val if np.isfinite(val) else np.nan
    return out


@njit(cache=True)
def vdp_jacobian(x, u, p):
    A = np.zeros((2, 2))
    B = np.zeros((2, 1))
    A[0, 1] = 1.0
    A[1, 0] = -2.0 * p[0] * x[0] * x[1] - 1.0
    A[1, 1] = -p[0] * (x[0] * x[0] - 1.0)
    B[1, 0] = 1.0
    return A, B


@njit(cache=True)
def cartpole_jacobian(x, u, p):
    g, l, m_c, m_p = p[0], p[1], p[2], p[3]
    th, w = x[1], x[3]
    s = np.sin(th)
    c = np.cos(th)
    D = m_c + m_p * s * s
    dD = 2.0 * m_p * s * c
    N3 = -m_p * l * w * w * s + m_p * g * s * c + u[0]
    N4 = -m_p * l * w * w * s * c + (m_c + m_p) * g * s + u[0] * c
    dN3_th = -m_p * l * w * w * c + m_p * g * (c * c - s * s)
    dN4_th = -m_p * l * w * w * (c * c - s * s) + (m_c + m_p) * g * c - u[0] * s
    A = np.zeros((4, 4))
    B = np.zeros((4, 1))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2, 1] = (dN3_th * D - N3 * dD) / (D * D)
    A[2, 3] = -2.0 * m_p * l * w * s / D
    A[3, 1] = (dN4_th * D - N4 * dD) / (l * D * D)
    A[3, 3] = -2.0 * m_p * l * w * s * c / (l * D)
    B[2, 0] = 1.0 / D
    B[3, 0] = c / (l * D)
    return A, B


@njit
def _box_grad(x, lo, hi, out, scale):
    for i in range(x.shape[0]):
        if x[i] < lo[i]:
            out[i] -= 2.0 * scale * (lo[i] - x[i])
        elif x[i] > hi[i]:
            out[i] += 2.0 * scale * (x[i] - hi[i])


@njit
def objective_grad(f, jac, p, x0, V, T, nprime, substeps, Q, R, Qf, mode, xlo, xhi, flo, fhi, rho):
    """Value and exact gradient (discrete adjoint of the RK4 rollout) for one ``V`` of shape ``(N, M, m)``."""
    N, M, m = V.shape
    n = x0.shape[0]
    steps = nprime * substeps
    h = T / steps
    per_segment = steps // M
    gh = T / nprime
    total_steps = N * steps
    xs = np.empty((total_steps + 1, n))
    xs[0] = x0
    # weight on x'Qx and on the box penalty at every refined point
    wq = np.zeros(total_steps + 1)
    wp = np.zeros(total_steps + 1)
    if mode == MODE_INTEGRAL:
        c_state = gh / 3.0
        c_eff = T / M
    elif mode == MODE_PER_SAMPLE:
        c_state = gh / 3.0 / T
        c_eff = 1.0 / M
    else:
        c_state = 0.0
        c_eff = 1.0
    for k in range(N):
        base = k * steps
        if mode == MODE_SAMPLED:
            wq[base] += 1.0
            wp[base] += 1.0
        else:
            wq[base] += c_state
            wp[base] += 1.0
            for j in range(1, nprime + 1):
                wj = 1.0 if j == nprime else (4.0 if j % 2 == 1 else 2.0)
                wq[base + j * substeps] += c_state * wj
                wp[base + j * substeps] += 1.0

    x = x0.copy()
    idx = 0
    for k in range(N):
        for j in range(nprime):
            for s in range(substeps):
                i = (j * substeps + s) // per_segment
                x = _rk4(f, x, V[k, i], p, h)
                idx += 1
                xs[idx] = x

    total = 0.0
    pen = 0.0
    for t in range(total_steps + 1):
        if wq[t] != 0.0:
            total += wq[t] * _quad(xs[t], Q)
        if rho > 0.0 and wp[t] != 0.0:
            pen += wp[t] * _box_sq(xs[t], xlo, xhi)
    for k in range(N):
        for i in range(M):
            total += c_eff * _quad(V[k, i], R)
    x_end = xs[total_steps]
    total += _quad(x_end, Qf)
    if rho > 0.0:
        pen += _box_sq(x_end, flo, fhi)
    value = total + rho * pen

    G = np.zeros((N, M, m))
    for k in range(N):
        for i in range(M):
            G[k, i] += 2.0 * c_eff * (R @ V[k, i])
    lam = 2.0 * (Qf @ x_end)
    if rho > 0.0:
        _box_grad(x_end, flo, fhi, lam, rho)
    for t in range(total_steps, -1, -1):
        if wq[t] != 0.0:
            lam += 2.0 * wq[t] * (Q @ xs[t])
        if rho > 0.0 and wp[t] != 0.0:
            _box_grad(xs[t], xlo, xhi, lam, rho * wp[t])
        if t == 0:
            break
        # adjoint of the RK4 step xs[t-1] -> xs[t]
        step = t - 1
        k = step // steps
        r = step % steps
        i = r // per_segment
        u = V[k, i]
        xa = xs[step]
        k1 = f(xa, u, p)
        x2 = xa + 0.5 * h * k1
        k2 = f(x2, u, p)
        x3 = xa + 0.5 * h * k2
        k3 = f(x3, u, p)
        x4 = xa + h * k3
        A1, B1 = jac(xa, u, p)
        A2, B2 = jac(x2, u, p)
        A3, B3 = jac(x3, u, p)
        A4, B4 = jac(x4, u, p)
        kb4 = (h / 6.0) * lam
        kb3 = (h / 3.0) * lam
        kb2 = (h / 3.0) * lam
        kb1 = (h / 6.0) * lam
        xb = lam.copy()
        xb4 = A4.T @ kb4
        G[k, i] += B4.T @ kb4
        xb += xb4
        kb3 = kb3 + h * xb4
        xb3 = A3.T @ kb3
        G[k, i] += B3.T @ kb3
        xb += xb3
        kb2 = kb2 + 0.5 * h * xb3
        xb2 = A2.T @ kb2
        G[k, i] += B2.T @ kb2
        xb += xb2
        kb1 = kb1 + 0.5 * h * xb2
        xb += A1.T @ kb1
        G[k, i] += B1.T @ kb1
        lam = xb
    return value, G
