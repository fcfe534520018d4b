import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from ttfs.baseline import satellite_baseline, tether_baseline
from ttfs.config import ExperimentConfig, RewardParams
from ttfs.dynamics import CoincidentSatellitesError, advance_coupled
from ttfs.env import (DoneReason, EnvKind, NormalizationBounds, ResetMode, TTFSEnv, TransitionLogger,
                      check_termination, denormalize_action, divergence_penalty, normalize,
                      normalize_action, reset_state, reward_satellite, reward_tether,
                      satellite_bounds, tether_bounds)
from ttfs.reference import satellite_reference, tether_reference

RW = RewardParams()
CFG = ExperimentConfig()
B = NormalizationBounds(s_min=[-1.0, 0.0, 2.0], s_max=[1.0, 4.0, 3.0], a_min=[-2.0], a_max=[2.0])

err6 = st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6)
err12 = st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=12)


def test_normalize_examples():
    assert np.array_equal(normalize(B.s_min, B)[0], [0, 0, 0])
    assert np.array_equal(normalize(B.s_max, B)[0], [1, 1, 1])
    assert np.allclose(normalize((B.s_min + B.s_max) / 2, B)[0], 0.5)


def test_normalize_counts_clipping():
    z, clipped = normalize([2.0, 2.0, 10.0], B)
    assert clipped == 2
    assert np.array_equal(z, [1.0, 0.5, 1.0])


def test_bounds_validated():
    with pytest.raises(ValueError):
        NormalizationBounds([0.0], [0.0], [0.0], [1.0])


def test_denormalize_examples():
    assert denormalize_action([0.0], B)[0] == -2.0
    assert denormalize_action([1.0], B)[0] == 2.0
    with pytest.raises(ValueError):
        denormalize_action([1.5], B)
    with pytest.raises(ValueError):
        denormalize_action([np.nan], B)


@settings(max_examples=500, deadline=None)
@given(st.floats(0.0, 1.0))
def test_action_round_trip(a):
    assert abs(normalize_action(denormalize_action([a], B), B)[0] - a) < 1e-12


@settings(max_examples=500, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_observation_round_trip(z):
    raw = B.s_min + np.array(z) * (B.s_max - B.s_min)
    assert np.max(np.abs(normalize(raw, B)[0] - z)) < 1e-12


def test_env_bounds_well_formed():
    for b in (tether_bounds(CFG), satellite_bounds(CFG)):
        assert np.all(b.s_max > b.s_min) and np.all(b.a_max > b.a_min)
    assert tether_bounds(CFG).s_min.size == 18
    assert satellite_bounds(CFG).s_min.size == 36


def test_reward_tether_examples():
    assert reward_tether(np.zeros(6), RW) == 0.0
    assert reward_tether([1, 0, 0, 0, 0, 0], RW) == pytest.approx(-0.5, abs=1e-12)
    assert reward_tether(np.full(6, 1e9), RW) == pytest.approx(-3.5, abs=1e-8)


def test_reward_satellite_examples():
    r = np.array([0.0, 0.0, 1.0, 0.0, 0.5, math.sqrt(3) / 2])
    sep = np.ones(3)
    out = reward_satellite(np.zeros(12), np.zeros(6), r, sep, RW)
    assert out.total == pytest.approx(0.0, abs=1e-12)
    u = np.zeros(6)
    u[0] = 1.0
    assert reward_satellite(np.zeros(12), u, r, sep, RW).energy == pytest.approx(-0.6, abs=1e-12)
    out = reward_satellite(np.zeros(12), np.zeros(6), r, [0.98, 1.0, 1.0], RW)
    assert out.distance == pytest.approx(-0.0384615384615384615, abs=1e-12)


def test_reward_satellite_coincident():
    with pytest.raises(CoincidentSatellitesError):
        reward_satellite(np.zeros(12), np.zeros(6), np.zeros(6), np.ones(3), RW)


@settings(max_examples=1000, deadline=None)
@given(err6)
def test_reward_tether_bounds(e):
    r = reward_tether(e, RW)
    assert -(RW.alpha1 + RW.alpha2) < r <= 0.0


@settings(max_examples=1000, deadline=None)
@given(err12, st.lists(st.floats(-1, 1), min_size=6, max_size=6),
       st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3))
def test_reward_satellite_bounds(e, u, ratio):
    r_sat = np.array([0.0, 0.0, 10.0, 0.0, 5.0, 8.0])
    out = reward_satellite(e, u, r_sat, np.array(ratio) * [10.0, math.hypot(5, 8), math.hypot(5, 8)], RW)
    assert -(RW.alpha3 + RW.alpha4) < out.tracking <= 0.0
    assert -RW.beta1 < out.energy <= 0.0
    assert -3.0 <= out.distance <= 0.0


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.0, 100.0), st.floats(1e-3, 100.0), st.floats(0.0, 10.0))
def test_reward_tether_monotone(a, da, other):
    lo = reward_tether([a, 0, 0, other, 0, 0], RW)
    hi = reward_tether([a + da, 0, 0, other, 0, 0], RW)
    assert hi < lo
    lo = reward_tether([other, 0, 0, a, 0, 0], RW)
    hi = reward_tether([other, 0, 0, a + da, 0, 0], RW)
    assert hi <= lo  # tanh saturates in float64 for large arguments
    if a + da < 15:
        assert hi < lo


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3))
def test_distance_term_peaks_only_at_match(ratio):
    r_sat = np.array([0.0, 0.0, 10.0, 0.0, 5.0, 8.0])
    sep = np.array([10.0, math.hypot(5, 8), math.hypot(5, 8)])
    d = reward_satellite(np.zeros(12), np.zeros(6), r_sat, sep * np.array(ratio), RW).distance
    if np.allclose(ratio, 1.0, rtol=0, atol=0):
        assert d == 0.0
    else:
        assert d < 0.0


def test_termination_examples():
    assert check_termination(2.001, 2.0, 10.0, 200.0, 0.0, 1e-3, 0.1) is DoneReason.DIVERGENCE
    assert check_termination(0.01, 2.0, 200.0, 200.0, 0.01, 1e-3, 0.1) is DoneReason.HORIZON
    assert check_termination(0.0, 2.0, 200.0, 200.0, 1e-4, 1e-3, 0.1) is DoneReason.GOAL
    assert check_termination(0.0, 2.0, 50.0, 200.0, 0.0, 1e-3, 0.1) is DoneReason.NONE
    assert check_termination(math.nan, 2.0, 50.0, 200.0, 0.0, 1e-3, 0.1) is DoneReason.DIVERGENCE


def test_divergence_penalty():
    assert divergence_penalty(-3.5, 0, 0.99) == 0.0
    assert divergence_penalty(-3.5, 1, 0.99) == pytest.approx(-3.5)
    assert divergence_penalty(-1.0, 10**6, 0.99) == pytest.approx(-100.0)


def test_reset_fixed_equals_reference():
    rng = np.random.default_rng(0)
    t0, x = reset_state(ResetMode.FIXED, 200.0, 0.1, np.ones(6), 0.5,
                        lambda t: tether_reference(t, CFG.reference), rng)
    assert t0 == 0.0
    assert np.array_equal(x, tether_reference(0.0, CFG.reference))


def test_reset_times_uniform():
    rng = np.random.default_rng(123)
    ts = [reset_state(ResetMode.RANDOM, 200.0, 0.1, np.ones(6), 0.0,
                      lambda t: tether_reference(t, CFG.reference), rng)[0] for _ in range(10_000)]
    assert min(ts) >= 0.0 and max(ts) < 200.0
    assert scipy.stats.kstest(ts, "uniform", args=(0.0, 200.0)).pvalue > 0.01


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reset_perturbation_bounded(seed):
    env = TTFSEnv(CFG, EnvKind.SATELLITE, seed=seed)
    env.reset()
    e_l = np.abs(tether_reference(env.t, env.rp) - env.eta)
    e_s = np.abs(satellite_reference(env.t, env.rp) - env.eps)
    span_l = (env.tb.s_max - env.tb.s_min)[12:18]
    span_s = (env.sb.s_max - env.sb.s_min)[24:36]
    assert np.all(e_l <= CFG.episode.reset_scale_tether * span_l)
    assert np.all(e_s <= CFG.episode.reset_scale_satellite * span_s)


def test_neutral_action_reproduces_baseline():
    env = TTFSEnv(CFG, EnvKind.SATELLITE, seed=3, reset_mode="start")
    env.reset()
    eps, eta, t0 = env.eps.copy(), env.eta.copy(), env.t
    gains = CFG.gains.gain_set()
    dist = CFG.disturbance.spec()
    for k in range(50):
        t = t0 + k * CFG.episode.dt
        tr = env.step(env.neutral_action)
        nu = tether_baseline(eta - tether_reference(t, CFG.reference), gains.K1, CFG.bounds.nu_max)
        u = satellite_baseline(eps - satellite_reference(t, CFG.reference), gains.K2, CFG.bounds.u_max)
        x = advance_coupled(np.concatenate([eps, eta]), u, nu, t, CFG.episode.dt,
                            CFG.episode.substeps, dist, CFG.system)
        eps, eta = x[:12], x[12:]
        assert np.array_equal(env.eps, eps) and np.array_equal(env.eta, eta)
        assert not tr.done


def test_reward_consistent_with_returned_state():
    env = TTFSEnv(CFG, EnvKind.SATELLITE, seed=5, reset_mode="random", normalize_obs=False)
    env.reset()
    rng = np.random.default_rng(1)
    for _ in range(20):
        tr = env.step(rng.uniform(0, 1, env.act_dim))
        raw = tr.s_next
        e_sat = raw[24:36]
        r = reward_satellite(e_sat, tr.info["u"], raw[12:18], env.eta[:3], CFG.reward)
        assert tr.r == pytest.approx(r.total, abs=1e-12)
        assert tr.r <= 0.0
        if tr.done:
            break


def test_transition_invariants_and_determinism():
    def run(seed):
        env = TTFSEnv(CFG, EnvKind.TETHER, seed=seed)
        env.reset()
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(200):
            tr = env.step(rng.uniform(0, 1, 3))
            assert np.all((tr.a >= 0) & (tr.a <= 1))
            assert math.isfinite(tr.r) and tr.r <= 0.0
            assert -(RW.alpha1 + RW.alpha2) < tr.info["components"]["tether"] <= 0
            out.append((tr.s.tobytes(), tr.r, tr.s_next.tobytes(), tr.done_reason))
            if tr.done:
                env.reset()
        return out

    assert run(11) == run(11)


def test_divergence_gets_penalty():
    cfg = CFG.replace(episode={"theta1": 0.01})
    env = TTFSEnv(cfg, EnvKind.TETHER, seed=0, reset_mode="fixed")
    env.reset()
    tr = env.step(np.ones(3))  # full learned voltage pushes the length error past 1 cm
    while not tr.done:
        tr = env.step(np.ones(3))
    assert tr.done_reason is DoneReason.DIVERGENCE
    assert tr.terminal
    remaining = env.max_steps - env.steps
    assert tr.info["penalty"] == pytest.approx(divergence_penalty(-3.5, remaining, 0.99))


def test_episode_ends_at_horizon():
    cfg = CFG.replace(reference={"t_final": 1.0})
    env = TTFSEnv(cfg, EnvKind.TETHER, seed=0, reset_mode="fixed")
    env.reset()
    reasons = [env.step(env.neutral_action).done_reason for _ in range(10)]
    assert reasons[-1] is DoneReason.HORIZON and all(r is DoneReason.NONE for r in reasons[:-1])
    assert env.t == 1.0


def test_centralized_dimensions():
    env = TTFSEnv(CFG, EnvKind.CENTRALIZED, seed=0)
    assert (env.obs_dim, env.act_dim) == (54, 9)
    obs = env.reset()
    assert obs.shape == (54,)
    tr = env.step(env.neutral_action)
    assert set(tr.info["components"]) == {"tether", "tracking", "energy", "distance"}


def test_tether_policy_drives_reels():
    calls = []

    def policy(obs):
        calls.append(obs.shape)
        return np.ones(3)

    env = TTFSEnv(CFG, EnvKind.SATELLITE, seed=0, tether_policy=policy)
    env.reset()
    tr = env.step(env.neutral_action)
    assert calls == [(18,)]
    assert np.allclose(tr.info["nu_l"], CFG.bounds.nu_l_max)


def test_transition_logger(tmp_path):
    env = TTFSEnv(CFG, EnvKind.TETHER, seed=0)
    env.reset()
    with TransitionLogger(tmp_path / "log.csv", env) as log:
        for _ in range(5):
            log.log(env.step(env.neutral_action))
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert len(lines) == 6
    assert lines[0].startswith("t,obs0")
