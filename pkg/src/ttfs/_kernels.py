"""Scalar-loop versions of the dynamics, compiled with numba.

Packed parameter order (see ``SystemParams.packed``):
``[m, R, mu, n, EA, D_r, k_e, T_m]``.
Disturbance codes: 0 none, 1 standard, 2 interpolated table.
"""
import math

import numpy as np

from ._accel import njit

_I = (0, 1, 0)
_J = (1, 2, 2)


@njit
def tension(r, lengths, EA):
    T = np.zeros(6)
    for k in range(3):
        i = _I[k]
        j = _J[k]
        dx = r[2 * i] - r[2 * j]
        dy = r[2 * i + 1] - r[2 * j + 1]
        dist = math.sqrt(dx * dx + dy * dy)
        if dist < 1e-9:
            raise ValueError("satellites coincide")
        stretch = dist - lengths[k]
        if stretch > 0.0:
            s = EA / lengths[k] * stretch / dist
            T[2 * i] -= s * dx
            T[2 * i + 1] -= s * dy
            T[2 * j] += s * dx
            T[2 * j + 1] += s * dy
    return T


@njit
def _sat_disturbance(t, mode, scale, table, out):
    if mode == 1:
        st = 0.1 * scale * math.sin(t)
        ct = 0.1 * scale * math.cos(t)
        for i in range(3):
            out[2 * i] = st
            out[2 * i + 1] = ct
    elif mode == 2:
        for k in range(6):
            out[k] = scale * np.interp(t, table[:, 0], table[:, 1 + k])
    else:
        for k in range(6):
            out[k] = 0.0


@njit
def _reel_disturbance(t, eta, mode, scale, table, out):
    if mode == 1:
        for k in range(3):
            out[k] = scale * eta[3 + k] * math.sin(eta[k])
    elif mode == 2:
        for k in range(3):
            out[k] = scale * np.interp(t, table[:, 0], table[:, 7 + k])
    else:
        for k in range(3):
            out[k] = 0.0


@njit
def reel_rhs(t, eta, nu, p, mode, scale, table):
    D_r = p[5]
    k_e = p[6]
    Tm = p[7]
    delta = np.empty(3)
    _reel_disturbance(t, eta, mode, scale, table, delta)
    out = np.empty(6)
    for k in range(3):
        out[k] = eta[3 + k]
        out[3 + k] = -eta[3 + k] / Tm + D_r / (Tm * k_e) * nu[k] + D_r / Tm * delta[k]
    return out


@njit
def coupled_rhs(t, x, u, nu, p, mode, scale, table):
    m = p[0]
    R = p[1]
    mu = p[2]
    n = p[3]
    EA = p[4]
    out = np.empty(18)
    T = tension(x[0:6], x[12:15], EA)
    d = np.empty(6)
    _sat_disturbance(t, mode, scale, table, d)
    for i in range(3):
        xi = x[2 * i]
        Ry = R + x[2 * i + 1]
        vx = x[6 + 2 * i]
        vy = x[6 + 2 * i + 1]
        rho3 = (xi * xi + Ry * Ry) ** 1.5
        out[2 * i] = vx
        out[2 * i + 1] = vy
        out[6 + 2 * i] = (2 * n * vy + n * n * xi - mu * xi / rho3
                          + T[2 * i] / m + u[2 * i] + d[2 * i])
        out[6 + 2 * i + 1] = (-2 * n * vx + n * n * Ry - mu * Ry / rho3
                              + T[2 * i + 1] / m + u[2 * i + 1] + d[2 * i + 1])
    out[12:] = reel_rhs(t, x[12:], nu, p, mode, scale, table)
    return out


@njit
def advance_coupled(x, u, nu, t, dt, substeps, p, mode, scale, table):
    h = dt / substeps
    x = x.copy()
    for s in range(substeps):
        ts = t + s * h
        k1 = coupled_rhs(ts, x, u, nu, p, mode, scale, table)
        k2 = coupled_rhs(ts + 0.5 * h, x + 0.5 * h * k1, u, nu, p, mode, scale, table)
        k3 = coupled_rhs(ts + 0.5 * h, x + 0.5 * h * k2, u, nu, p, mode, scale, table)
        k4 = coupled_rhs(ts + h, x + h * k3, u, nu, p, mode, scale, table)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


@njit
def advance_reel(eta, nu, t, dt, substeps, p, mode, scale, table):
    h = dt / substeps
    eta = eta.copy()
    for s in range(substeps):
        ts = t + s * h
        k1 = reel_rhs(ts, eta, nu, p, mode, scale, table)
        k2 = reel_rhs(ts + 0.5 * h, eta + 0.5 * h * k1, nu, p, mode, scale, table)
        k3 = reel_rhs(ts + 0.5 * h, eta + 0.5 * h * k2, nu, p, mode, scale, table)
        k4 = reel_rhs(ts + h, eta + h * k3, nu, p, mode, scale, table)
        eta = eta + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return eta
