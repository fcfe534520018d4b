"""Planar equations of motion for the three-satellite tethered formation.

State layout used throughout the package:

* satellites ``eps`` (12,): ``[x1, y1, x2, y2, x3, y3, vx1, vy1, ..., vy3]``
* tethers ``eta`` (6,): ``[l1, l2, l3, dl1, dl2, dl3]`` with l1 = l12, l2 = l23, l3 = l13

The numpy functions in this module are the reference implementation.  The
integrator dispatches to the compiled kernels in :mod:`ttfs._kernels` unless
``TTFS_DISABLE_NUMBA`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _accel

COINCIDENCE_TOL = 1e-9

# tether k joins satellites PAIRS[k]
PAIRS = ((0, 1), (1, 2), (0, 2))


class CoincidentSatellitesError(ValueError):
    """Two satellites closer than ``COINCIDENCE_TOL``; tether direction undefined."""


class NonFiniteStateError(FloatingPointError):
    """Integration produced NaN or inf."""


@dataclass(frozen=True)
class SystemParams:
    m: float = 50.0
    R: float = 7.378e6
    mu: float = 3.98603e14
    n: float | None = None
    E: float = 1.528e9
    A: float = 1.963e-7
    D_r: float = 0.05
    R_a: float = 0.062
    k_e: float = 0.275
    k_m: float = 0.275
    J: float = 0.1

    def __post_init__(self):
        if self.n is None:
            # circular Keplerian rate of the formation centroid
            object.__setattr__(self, "n", math.sqrt(self.mu / self.R**3))
        for name in ("m", "R", "mu", "n", "E", "A", "D_r", "R_a", "k_e", "k_m", "J"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"SystemParams.{name} must be positive and finite, got {value}")

    @property
    def T_m(self) -> float:
        return self.R_a * self.J / (self.k_e * self.k_m)

    @property
    def EA(self) -> float:
        return self.E * self.A

    def packed(self) -> np.ndarray:
        """Flat array consumed by the compiled kernels."""
        return np.array(
            [self.m, self.R, self.mu, self.n, self.EA, self.D_r, self.k_e, self.T_m],
            dtype=np.float64,
        )


@dataclass
class SatelliteState:
    r_sat: np.ndarray
    v_sat: np.ndarray

    def __post_init__(self):
        self.r_sat = np.asarray(self.r_sat, dtype=np.float64).reshape(6)
        self.v_sat = np.asarray(self.v_sat, dtype=np.float64).reshape(6)
        if not (np.all(np.isfinite(self.r_sat)) and np.all(np.isfinite(self.v_sat))):
            raise NonFiniteStateError("satellite state must be finite")

    @classmethod
    def from_array(cls, eps) -> "SatelliteState":
        eps = np.asarray(eps, dtype=np.float64)
        return cls(eps[:6], eps[6:12])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.r_sat, self.v_sat])


@dataclass
class TetherState:
    lengths: np.ndarray
    speeds: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=np.float64).reshape(3)
        self.speeds = np.asarray(self.speeds, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(self.lengths)) and np.all(np.isfinite(self.speeds))):
            raise NonFiniteStateError("tether state must be finite")
        if np.any(self.lengths <= 0):
            raise ValueError(f"tether lengths must be positive, got {self.lengths}")

    @classmethod
    def from_array(cls, eta) -> "TetherState":
        eta = np.asarray(eta, dtype=np.float64)
        return cls(eta[:3], eta[3:6])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lengths, self.speeds])


@dataclass
class ControlInputs:
    u: np.ndarray = field(default_factory=lambda: np.zeros(6))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64).reshape(6)
        self.nu = np.asarray(self.nu, dtype=np.float64).reshape(3)


class DisturbanceMode(str, Enum):
    NONE = "none"
    STANDARD = "standard"
    TABLE = "custom-table"


_MODE_CODE = {DisturbanceMode.NONE: 0, DisturbanceMode.STANDARD: 1, DisturbanceMode.TABLE: 2}


@dataclass
class DisturbanceSpec:
    """External perturbations.

    ``standard`` mode: reel term ``l̇_i sin(l_i)`` and satellite acceleration
    ``0.1 [sin t, cos t]`` on every satellite, both multiplied by ``scale``.
    ``custom-table`` mode: ``table`` has columns ``[t, d1x, d1y, d2x, d2y, d3x, d3y,
    delta1, delta2, delta3]`` and is linearly interpolated in time.
    """

    mode: DisturbanceMode = DisturbanceMode.STANDARD
    scale: float = 1.0
    table: np.ndarray | None = None

    def __post_init__(self):
        self.mode = DisturbanceMode(self.mode)
        if self.mode is DisturbanceMode.TABLE:
            if self.table is None:
                raise ValueError("custom-table disturbance requires a table")
            self.table = np.asarray(self.table, dtype=np.float64)
            if self.table.ndim != 2 or self.table.shape[1] != 10 or self.table.shape[0] < 2:
                raise ValueError("disturbance table must have shape (k >= 2, 10)")
            if np.any(np.diff(self.table[:, 0]) <= 0):
                raise ValueError("disturbance table times must be strictly increasing")

    @property
    def code(self) -> int:
        return _MODE_CODE[self.mode]

    def kernel_table(self) -> np.ndarray:
        if self.table is None:
            return np.zeros((2, 10))
        return self.table

    def satellite(self, t: float) -> np.ndarray:
        """Per-satellite acceleration disturbance D (6,)."""
        if self.mode is DisturbanceMode.NONE:
            return np.zeros(6)
        if self.mode is DisturbanceMode.STANDARD:
            return self.scale * 0.1 * np.tile([math.sin(t), math.cos(t)], 3)
        return self.scale * np.array(
            [np.interp(t, self.table[:, 0], self.table[:, 1 + k]) for k in range(6)]
        )

    def reel(self, t: float, eta: np.ndarray) -> np.ndarray:
        """Unmodeled reel term delta (3,)."""
        if self.mode is DisturbanceMode.NONE:
            return np.zeros(3)
        if self.mode is DisturbanceMode.STANDARD:
            return self.scale * eta[3:6] * np.sin(eta[:3])
        return self.scale * np.array(
            [np.interp(t, self.table[:, 0], self.table[:, 7 + k]) for k in range(3)]
        )


def separations(r_sat) -> np.ndarray:
    """Distances |r_i - r_j| ordered like the tethers (12, 23, 13)."""
    r = np.asarray(r_sat, dtype=np.float64).reshape(3, 2)
    return np.array([np.linalg.norm(r[i] - r[j]) for i, j in PAIRS])


def _tension(r_sat: np.ndarray, lengths: np.ndarray, EA: float) -> np.ndarray:
    r = r_sat.reshape(3, 2)
    ii = np.array([0, 1, 0])
    jj = np.array([1, 2, 2])
    diff = r[ii] - r[jj]  # points from j to i
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    if np.any(dist < COINCIDENCE_TOL):
        raise CoincidentSatellitesError(f"satellites coincide, separations {dist}")
    stretch = dist - lengths
    mag = np.where(stretch > 0.0, EA / lengths * stretch, 0.0)
    f_i = -(mag / dist)[:, None] * diff  # force on i, toward j
    T = np.zeros((3, 2))
    np.add.at(T, ii, f_i)
    np.add.at(T, jj, -f_i)
    return T.reshape(6)


def tension_forces(sat: SatelliteState, teth: TetherState, p: SystemParams) -> np.ndarray:
    """Elastic tether forces on each satellite (N), stacked ``[T1x, T1y, ..., T3y]``.

    A tether pulls only while its endpoints are farther apart than its natural length.
    """
    return _tension(sat.r_sat, teth.lengths, p.EA)


def _satellite_rhs(eps: np.ndarray, u: np.ndarray, T: np.ndarray, d: np.ndarray,
                   p: SystemParams) -> np.ndarray:
    x = eps[0:6:2]
    y = eps[1:6:2]
    vx = eps[6:12:2]
    vy = eps[7:12:2]
    n = p.n
    Ry = p.R + y
    rho3 = (x * x + Ry * Ry) ** 1.5
    ax = 2 * n * vy + n * n * x - p.mu * x / rho3
    ay = -2 * n * vx + n * n * Ry - p.mu * Ry / rho3
    acc = np.empty(6)
    acc[0::2] = ax
    acc[1::2] = ay
    acc += T / p.m + u + d
    return np.concatenate([eps[6:12], acc])


def satellite_derivative(sat: SatelliteState, u, T, d, p: SystemParams) -> np.ndarray:
    """Time derivative of the 12-element satellite state in the rotating orbit frame."""
    return _satellite_rhs(sat.as_array(), np.asarray(u, float), np.asarray(T, float),
                          np.asarray(d, float), p)


def _reel_rhs(eta: np.ndarray, nu: np.ndarray, delta: np.ndarray, p: SystemParams) -> np.ndarray:
    Tm = p.T_m
    acc = -eta[3:6] / Tm + p.D_r / (Tm * p.k_e) * nu + p.D_r / Tm * delta
    return np.concatenate([eta[3:6], acc])


def reel_derivative(teth: TetherState, nu, delta, p: SystemParams) -> np.ndarray:
    """Time derivative of ``[l, l̇]`` for the DC reel motors."""
    return _reel_rhs(teth.as_array(), np.asarray(nu, float), np.asarray(delta, float), p)


def nominal_satellite_matrices(p: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """(A, B) of the linearised relative-motion model, state order as ``eps``."""
    n = p.n
    A = np.zeros((12, 12))
    A[:6, 6:] = np.eye(6)
    for i in range(3):
        A[6 + 2 * i + 1, 2 * i + 1] = 3 * n * n
        A[6 + 2 * i, 6 + 2 * i + 1] = 2 * n
        A[6 + 2 * i + 1, 6 + 2 * i] = -2 * n
    B = np.zeros((12, 6))
    B[6:, :] = np.eye(6)
    return A, B


def nominal_reel_matrices(p: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3:, 3:] = -np.eye(3) / p.T_m
    B = np.zeros((6, 3))
    B[3:, :] = p.D_r / (p.T_m * p.k_e) * np.eye(3)
    return A, B


def nominal_satellite_derivative(sat: SatelliteState, u_m, p: SystemParams) -> np.ndarray:
    A, B = nominal_satellite_matrices(p)
    return A @ sat.as_array() + B @ np.asarray(u_m, float)


def nominal_reel_derivative(teth: TetherState, nu_m, p: SystemParams) -> np.ndarray:
    A, B = nominal_reel_matrices(p)
    return A @ teth.as_array() + B @ np.asarray(nu_m, float)


# --- integration -----------------------------------------------------------

def coupled_rhs(t: float, x: np.ndarray, u: np.ndarray, nu: np.ndarray,
                dist: DisturbanceSpec, p: SystemParams) -> np.ndarray:
    """Derivative of the stacked 18-state ``[eps, eta]``."""
    eps = x[:12]
    eta = x[12:]
    T = _tension(eps[:6], eta[:3], p.EA)
    return np.concatenate([
        _satellite_rhs(eps, u, T, dist.satellite(t), p),
        _reel_rhs(eta, nu, dist.reel(t, eta), p),
    ])


def reel_rhs(t: float, eta: np.ndarray, nu: np.ndarray, dist: DisturbanceSpec,
             p: SystemParams) -> np.ndarray:
    return _reel_rhs(eta, nu, dist.reel(t, eta), p)


def _rk4(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def advance_coupled_numpy(x, u, nu, t, dt, substeps, dist, p):
    h = dt / substeps
    x = np.array(x, dtype=np.float64)
    for k in range(substeps):
        x = _rk4(lambda tt, xx: coupled_rhs(tt, xx, u, nu, dist, p), t + k * h, x, h)
    return x


def advance_reel_numpy(eta, nu, t, dt, substeps, dist, p):
    h = dt / substeps
    eta = np.array(eta, dtype=np.float64)
    for k in range(substeps):
        eta = _rk4(lambda tt, xx: reel_rhs(tt, xx, nu, dist, p), t + k * h, eta, h)
    return eta


def advance_coupled(x, u, nu, t: float, dt: float, substeps: int, dist: DisturbanceSpec,
                    p: SystemParams, use_numba: bool | None = None) -> np.ndarray:
    """RK4 over one control interval, controls held constant, ``substeps`` equal steps."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u = np.asarray(u, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if _accel.USE_NUMBA if use_numba is None else use_numba:
        from . import _kernels
        try:
            out = _kernels.advance_coupled(np.asarray(x, dtype=np.float64), u, nu, float(t),
                                           float(dt), int(substeps), p.packed(), dist.code,
                                           float(dist.scale), dist.kernel_table())
        except ValueError as exc:
            # the compiled tension kernel signals coincidence with a plain ValueError
            raise CoincidentSatellitesError(str(exc)) from exc
    else:
        out = advance_coupled_numpy(x, u, nu, t, dt, substeps, dist, p)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError(f"integration diverged at t={t}")
    return out


def advance_reel(eta, nu, t: float, dt: float, substeps: int, dist: DisturbanceSpec,
                 p: SystemParams, use_numba: bool | None = None) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    nu = np.asarray(nu, dtype=np.float64)
    if _accel.USE_NUMBA if use_numba is None else use_numba:
        from . import _kernels
        out = _kernels.advance_reel(np.asarray(eta, dtype=np.float64), nu, float(t), float(dt),
                                    int(substeps), p.packed(), dist.code, float(dist.scale),
                                    dist.kernel_table())
    else:
        out = advance_reel_numpy(eta, nu, t, dt, substeps, dist, p)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError(f"integration diverged at t={t}")
    return out


def step(sat: SatelliteState, teth: TetherState, controls: ControlInputs,
         dist: DisturbanceSpec, t: float, dt: float, p: SystemParams,
         substeps: int = 1) -> tuple[SatelliteState, TetherState]:
    """Advance satellites and reels together by ``dt`` (zero-order hold on controls)."""
    x = np.concatenate([sat.as_array(), teth.as_array()])
    x = advance_coupled(x, controls.u, controls.nu, t, dt, substeps, dist, p)
    return SatelliteState.from_array(x[:12]), TetherState.from_array(x[12:])
