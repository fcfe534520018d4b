import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from ttfs.baseline import (GainSet, NotHurwitzError, certify_gains, closed_loop_matrices,
                           satellite_baseline, solve_lyapunov, tether_baseline)
from ttfs.config import GainConfig
from ttfs.dynamics import SystemParams

P = SystemParams()


def test_diagonal_analytic():
    a = np.array([0.5, 2.0, 7.0])
    P_ = solve_lyapunov(-np.diag(a), np.eye(3))
    assert np.allclose(P_, np.diag(1 / (2 * a)), atol=1e-10, rtol=0)


def test_scalar_with_weight():
    P_ = solve_lyapunov(np.array([[-3.0]]), np.array([[12.0]]))
    assert P_[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_matches_scipy_on_nonsymmetric():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(5, 5))
    A = M - (np.max(np.linalg.eigvals(M).real) + 1.0) * np.eye(5)
    Q = np.eye(5)
    ref = scipy.linalg.solve_continuous_lyapunov(A.T, -Q)
    assert np.allclose(solve_lyapunov(A, Q), ref, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_random_stable_residual(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    A = M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(n)
    L = rng.normal(size=(n, n))
    Q = L @ L.T + np.eye(n)
    P_ = solve_lyapunov(A, Q)
    assert np.linalg.norm(A.T @ P_ + P_ @ A + Q) < 1e-8 * np.linalg.norm(Q)
    assert np.allclose(P_, P_.T)


def test_unstable_rejected():
    with pytest.raises(NotHurwitzError):
        solve_lyapunov(np.diag([-1.0, 0.1]), np.eye(2))


def test_asymmetric_q_rejected():
    with pytest.raises(ValueError):
        solve_lyapunov(-np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_baseline_laws_sign_and_clip():
    K1 = GainSet.pd(40, 2, 0.04, 0.28).K1
    e = np.array([0.1, 0, 0, 0, 0, 0])  # tether 1 longer than desired
    nu = tether_baseline(e, K1, 10.0)
    assert nu[0] == pytest.approx(-4.0)
    assert tether_baseline(10 * np.ones(6), K1, 10.0).tolist() == [-10.0] * 3
    K2 = GainSet.pd(40, 2, 0.04, 0.28).K2
    assert np.allclose(satellite_baseline(np.ones(12), K2, 0.02), -0.02)


def test_gain_shape_checked():
    with pytest.raises(ValueError):
        GainSet(np.zeros((3, 5)), np.zeros((6, 12)))


def test_default_closed_loops_hurwitz():
    A1, A2 = closed_loop_matrices(GainConfig().gain_set(), P)
    assert np.linalg.eigvals(A1).real.max() < 0
    assert np.linalg.eigvals(A2).real.max() < 0


def test_default_tether_certificate_valid():
    tether, sat = certify_gains(GainConfig().gain_set(), P, l_min=1.0)
    assert tether.valid
    assert sat.positive_definite


def test_coupling_margin_vanishes_at_required_length():
    _, sat = certify_gains(GainConfig().gain_set(), P, l_min=1.0)
    _, sat2 = certify_gains(GainConfig().gain_set(), P, l_min=sat.l_min_required)
    assert sat2.coupling_margin == pytest.approx(0.0, abs=1e-9)
    _, sat3 = certify_gains(GainConfig().gain_set(), P, l_min=1.01 * sat.l_min_required)
    assert sat3.valid


def test_coupling_constant():
    _, sat = certify_gains(GainConfig().gain_set(), P, l_min=2.0)
    assert sat.c2 == pytest.approx(2 * P.EA / (P.m * 2.0))
    assert "coupling margin" in sat.report()
