"""Constant-rate deployment reference: equilateral, spinning, expanding triangle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_PHASES = 2.0 * math.pi / 3.0 * np.arange(3)
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ReferenceParams:
    a: float = 1.0          # release rate, m/s
    l0: float = 1.0         # initial natural length, m
    n: float = 0.003        # spin rate of the reference triangle, rad/s
    t_final: float = 200.0  # s

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("release rate a must be >= 0")
        if self.l0 <= 0:
            raise ValueError("l0 must be positive")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")

    @property
    def l_final(self) -> float:
        return self.l0 + self.a * self.t_final


def desired_tether(t: float, rp: ReferenceParams) -> tuple[float, float]:
    """(length, rate) shared by all three tethers."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return rp.l0 + rp.a * t, rp.a


def tether_reference(t: float, rp: ReferenceParams) -> np.ndarray:
    """Stacked ``eta_r = [l, l, l, a, a, a]``."""
    l_d, chi_d = desired_tether(t, rp)
    return np.array([l_d, l_d, l_d, chi_d, chi_d, chi_d])


def desired_satellite(t: float, rp: ReferenceParams) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities (6,) each on the circle of radius l_d / sqrt(3)."""
    l_d, rate = desired_tether(t, rp)
    phase = rp.n * t + _PHASES
    c = np.cos(phase)
    s = np.sin(phase)
    pos = np.empty(6)
    vel = np.empty(6)
    pos[0::2] = l_d / _SQRT3 * c
    pos[1::2] = l_d / _SQRT3 * s
    vel[0::2] = rate / _SQRT3 * c - l_d * rp.n / _SQRT3 * s
    vel[1::2] = rate / _SQRT3 * s + l_d * rp.n / _SQRT3 * c
    return pos, vel


def satellite_reference(t: float, rp: ReferenceParams) -> np.ndarray:
    pos, vel = desired_satellite(t, rp)
    return np.concatenate([pos, vel])
