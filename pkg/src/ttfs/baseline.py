"""PD baseline laws and the Lyapunov-equation gain verifier.

Both laws take the tracking error as *state minus reference*; with that sign
``-K e`` gives the closed loop ``A - B K`` that the verifier certifies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SystemParams, nominal_reel_matrices, nominal_satellite_matrices

EIG_TOL = 1e-10


class NotHurwitzError(ValueError):
    def __init__(self, eigenvalue):
        self.eigenvalue = eigenvalue
        super().__init__(f"closed-loop matrix is not Hurwitz: eigenvalue {eigenvalue:.6g}")


class SingularLyapunovError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ActuatorBounds:
    nu_max: float = 10.0   # V
    u_max: float = 0.02    # m/s^2, 1 N on a 50 kg satellite


@dataclass
class GainSet:
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        self.K1 = np.asarray(self.K1, dtype=np.float64)
        self.K2 = np.asarray(self.K2, dtype=np.float64)
        if self.K1.shape != (3, 6) or self.K2.shape != (6, 12):
            raise ValueError(f"gain shapes must be (3, 6) and (6, 12), got {self.K1.shape}, {self.K2.shape}")

    @classmethod
    def pd(cls, kp1: float, kd1: float, kp2: float, kd2: float) -> "GainSet":
        return cls(np.hstack([kp1 * np.eye(3), kd1 * np.eye(3)]),
                   np.hstack([kp2 * np.eye(6), kd2 * np.eye(6)]))


def tether_baseline(e_l, K1, nu_max: float = np.inf) -> np.ndarray:
    """Reel voltages ``clip(-K1 e_l)``; ``e_l`` is tether state minus reference."""
    return np.clip(-np.asarray(K1) @ np.asarray(e_l, dtype=np.float64), -nu_max, nu_max)


def satellite_baseline(e_sat, K2, u_max: float = np.inf) -> np.ndarray:
    """Thrust accelerations ``clip(-K2 e_sat)``; ``e_sat`` is satellite state minus reference."""
    return np.clip(-np.asarray(K2) @ np.asarray(e_sat, dtype=np.float64), -u_max, u_max)


def solve_lyapunov(A_cl, Q) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` through its Kronecker-vectorised linear system."""
    A = np.asarray(A_cl, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A_cl and Q must be square and of equal size")
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    eigs = np.linalg.eigvals(A)
    worst = eigs[np.argmax(eigs.real)]
    if worst.real >= 0:
        raise NotHurwitzError(worst)
    I = np.eye(n)
    # column-major vec: vec(A^T P) = (I kron A^T) vec P, vec(P A) = (A^T kron I) vec P
    M = np.kron(I, A.T) + np.kron(A.T, I)
    try:
        p = np.linalg.solve(M, -Q.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunovError(str(exc)) from exc
    P = p.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    residual = np.linalg.norm(A.T @ P + P @ A + Q)
    if residual > 1e-8 * np.linalg.norm(Q):
        raise SingularLyapunovError(f"Lyapunov residual {residual:.3e} too large")
    return P


@dataclass
class LyapunovCertificate:
    name: str
    P: np.ndarray
    Q: np.ndarray
    min_eig_P: float
    min_eig_Q: float
    max_eig_P: float
    closed_loop_eigs: np.ndarray
    coupling_margin: float | None = None
    c2: float | None = None
    l_min: float | None = None

    @property
    def positive_definite(self) -> bool:
        return self.min_eig_P > EIG_TOL and self.min_eig_Q > EIG_TOL

    @property
    def valid(self) -> bool:
        if not self.positive_definite:
            return False
        return self.coupling_margin is None or self.coupling_margin > 0

    @property
    def l_min_required(self) -> float | None:
        """Smallest tether length for which the coupling margin would be positive."""
        if self.c2 is None:
            return None
        return self.l_min * 2 * self.c2 * self.max_eig_P / self.min_eig_Q

    def report(self) -> str:
        lines = [
            f"[{self.name}] {'VALID' if self.valid else 'INVALID'}",
            f"  closed-loop max Re(eig) = {self.closed_loop_eigs.real.max():.6g}",
            f"  lambda_min(P) = {self.min_eig_P:.6g}, lambda_max(P) = {self.max_eig_P:.6g}",
            f"  lambda_min(Q) = {self.min_eig_Q:.6g}",
        ]
        if self.coupling_margin is not None:
            lines += [
                f"  tension Lipschitz bound c2 = {self.c2:.6g} 1/s^2 at l_min = {self.l_min:g} m",
                f"  coupling margin lambda_min(Q) - 2 c2 lambda_max(P) = {self.coupling_margin:.6g}",
                f"  reversed form 2 c2 lambda_max(P) - lambda_min(Q) = {-self.coupling_margin:.6g}",
                f"  margin positive for tether lengths above {self.l_min_required:.6g} m",
            ]
            if self.coupling_margin <= 0:
                lines.append(f"  coupling condition violated (margin {self.coupling_margin:.6g})")
        return "\n".join(lines)


def _certificate(name, A_cl, Q):
    P = solve_lyapunov(A_cl, Q)
    eP = np.linalg.eigvalsh(P)
    eQ = np.linalg.eigvalsh(Q)
    return LyapunovCertificate(name=name, P=P, Q=Q, min_eig_P=float(eP[0]), max_eig_P=float(eP[-1]),
                               min_eig_Q=float(eQ[0]), closed_loop_eigs=np.linalg.eigvals(A_cl))


def closed_loop_matrices(gains: GainSet, p: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    A1, B1 = nominal_reel_matrices(p)
    A2, B2 = nominal_satellite_matrices(p)
    return A1 - B1 @ gains.K1, A2 - B2 @ gains.K2


def certify_gains(gains: GainSet, p: SystemParams, l_min: float,
                  q_scale: float = 1.0) -> tuple[LyapunovCertificate, LyapunovCertificate]:
    """Tether and satellite certificates for the nominal closed loops with ``Q = q_scale * I``.

    The satellite certificate also checks that the tension coupling, bounded by
    ``c2 |e_sat|`` with ``c2 = 2 E A / (m l_min)``, is dominated by the decay rate.
    """
    if l_min <= 0:
        raise ValueError("l_min must be positive")
    A1, A2 = closed_loop_matrices(gains, p)
    tether = _certificate("tether", A1, q_scale * np.eye(6))
    sat = _certificate("satellite", A2, q_scale * np.eye(12))
    c2 = 2.0 * p.EA / (p.m * l_min)
    sat.c2 = c2
    sat.l_min = l_min
    sat.coupling_margin = sat.min_eig_Q - 2.0 * c2 * sat.max_eig_P
    return tether, sat
