"""Tether-level, satellite-level and centralized MDP environments.

Observations are ``{reference, state, reference - state}``, min-max normalised
to [0, 1] unless normalisation is switched off.  Learned actions live in
[0, 1] and are mapped to physical compensation that is added to the PD
baseline; the sum is clamped to the actuator limits.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np

from .baseline import satellite_baseline, tether_baseline
from .config import EpisodeConfig, ExperimentConfig, RewardParams
from .dynamics import (CoincidentSatellitesError, NonFiniteStateError, advance_coupled,
                       advance_reel, separations)
from .reference import ReferenceParams, satellite_reference, tether_reference

_SQRT3 = math.sqrt(3.0)


class DoneReason(str, Enum):
    NONE = "none"
    DIVERGENCE = "divergence"
    GOAL = "goal"
    HORIZON = "horizon"


class EnvKind(str, Enum):
    TETHER = "tether"
    SATELLITE = "satellite"
    CENTRALIZED = "centralized"


class ResetMode(str, Enum):
    RANDOM = "random"   # random time on the reference plus perturbation
    FIXED = "fixed"     # t = 0, no perturbation
    START = "start"     # t = 0 plus perturbation (evaluation)


# --- normalisation -----------------------------------------------------------

@dataclass
class NormalizationBounds:
    s_min: np.ndarray
    s_max: np.ndarray
    a_min: np.ndarray
    a_max: np.ndarray

    def __post_init__(self):
        for name in ("s_min", "s_max", "a_min", "a_max"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.s_max <= self.s_min) or np.any(self.a_max <= self.a_min):
            raise ValueError("normalisation bounds need max > min componentwise")


def normalize(raw, b: NormalizationBounds) -> tuple[np.ndarray, int]:
    """Min-max map onto [0, 1]; returns the clipped vector and the number of clipped entries."""
    z = (np.asarray(raw, dtype=np.float64) - b.s_min) / (b.s_max - b.s_min)
    clipped = int(np.count_nonzero((z < 0.0) | (z > 1.0)))
    return np.clip(z, 0.0, 1.0), clipped


def normalize_action(a, b: NormalizationBounds) -> np.ndarray:
    return (np.asarray(a, dtype=np.float64) - b.a_min) / (b.a_max - b.a_min)


def denormalize_action(a_norm, b: NormalizationBounds) -> np.ndarray:
    a_norm = np.asarray(a_norm, dtype=np.float64)
    if np.any(~np.isfinite(a_norm)) or np.any(a_norm < 0.0) or np.any(a_norm > 1.0):
        raise ValueError(f"normalised action outside [0, 1]: {a_norm}")
    return b.a_min + a_norm * (b.a_max - b.a_min)


def tether_bounds(cfg: ExperimentConfig) -> NormalizationBounds:
    rp, ep, bd, p = cfg.reference, cfg.episode, cfg.bounds, cfg.system
    rate = p.D_r * bd.nu_max / p.k_e + rp.a
    lo_l, hi_l = rp.l0 - ep.theta1, rp.l_final + ep.theta1
    state_min = np.r_[np.full(3, lo_l), np.full(3, -rate)]
    state_max = np.r_[np.full(3, hi_l), np.full(3, rate)]
    err = np.r_[np.full(3, ep.theta1), np.full(3, 2 * rate)]
    return NormalizationBounds(
        s_min=np.r_[state_min, state_min, -err], s_max=np.r_[state_max, state_max, err],
        a_min=np.full(3, -bd.nu_l_max), a_max=np.full(3, bd.nu_l_max),
    )


def satellite_bounds(cfg: ExperimentConfig) -> NormalizationBounds:
    rp, ep, bd = cfg.reference, cfg.episode, cfg.bounds
    pos = rp.l_final / _SQRT3 + ep.theta2
    vel = math.hypot(rp.a, rp.l_final * rp.n) / _SQRT3 + bd.vel_margin
    state = np.r_[np.full(6, pos), np.full(6, vel)]
    err = np.r_[np.full(6, ep.theta2), np.full(6, bd.vel_err_bound)]
    return NormalizationBounds(
        s_min=np.r_[-state, -state, -err], s_max=np.r_[state, state, err],
        a_min=np.full(6, -bd.u_l_max), a_max=np.full(6, bd.u_l_max),
    )


def _concat_bounds(first: NormalizationBounds, second: NormalizationBounds) -> NormalizationBounds:
    return NormalizationBounds(np.r_[first.s_min, second.s_min], np.r_[first.s_max, second.s_max],
                               np.r_[first.a_min, second.a_min], np.r_[first.a_max, second.a_max])


# --- rewards ---------------------------------------------------------------

def _tracking(e, n_pos, w_pos, w_vel):
    e = np.asarray(e, dtype=np.float64)
    return float(w_pos * (1.0 / (1.0 + np.linalg.norm(e[:n_pos])) - 1.0)
                 + w_vel * math.tanh(-np.linalg.norm(e[n_pos:])))


def reward_tether(e_l, rp: RewardParams) -> float:
    """Length and reel-rate tracking reward, in (-(alpha1 + alpha2), 0]."""
    return _tracking(e_l, 3, rp.alpha1, rp.alpha2)


class SatelliteReward(NamedTuple):
    tracking: float
    energy: float
    distance: float

    @property
    def total(self) -> float:
        return self.tracking + self.energy + self.distance


def reward_satellite(e_sat, u, r_sat, lengths, rp: RewardParams) -> SatelliteReward:
    """Tracking, thrust-energy and tether-length-match terms; each is <= 0."""
    tracking = _tracking(e_sat, 6, rp.alpha3, rp.alpha4)
    energy = rp.beta1 * (1.0 / (1.0 + rp.beta2 * np.linalg.norm(u)) - 1.0)
    sep = separations(r_sat)
    if np.any(sep < 1e-9):
        raise CoincidentSatellitesError("satellites coincide")
    ratio = np.asarray(lengths, dtype=np.float64) / sep - 1.0
    distance = float(np.sum(1.0 / (1.0 + rp.beta3 * ratio * ratio)) - 3.0)
    return SatelliteReward(float(tracking), float(energy), distance)


def divergence_penalty(floor: float, remaining: int, gamma: float) -> float:
    """Discounted value of receiving ``floor`` on every step the episode lost."""
    if remaining <= 0:
        return 0.0
    return floor * (1.0 - gamma**remaining) / (1.0 - gamma)


def check_termination(pos_error_norm: float, threshold: float, t: float, t_final: float,
                      goal_error: float, goal_tol: float, dt: float) -> DoneReason:
    """``pos_error_norm`` is |H e| (length or position part); ``goal_error`` is normalised."""
    if not math.isfinite(pos_error_norm) or pos_error_norm > threshold:
        return DoneReason.DIVERGENCE
    if t >= t_final - 1e-6 * dt:
        return DoneReason.GOAL if goal_error < goal_tol else DoneReason.HORIZON
    return DoneReason.NONE


# --- environment -----------------------------------------------------------

@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    done_reason: DoneReason
    info: dict = field(default_factory=dict)

    @property
    def terminal(self) -> bool:
        """True when bootstrapping must stop (time-limit ends are not terminal)."""
        return self.done_reason is DoneReason.DIVERGENCE or bool(self.info.get("terminal", False))


def reset_state(mode: ResetMode, t_final: float, dt: float, spans: np.ndarray, scale: float,
                ref_fn: Callable[[float], np.ndarray], rng: np.random.Generator,
                t_start: float | None = None) -> tuple[float, np.ndarray]:
    """Initial (time, state): a point on the reference plus uniform noise of width ``scale * spans``."""
    mode = ResetMode(mode)
    if t_start is not None:
        t0 = float(t_start)
    elif mode is ResetMode.RANDOM:
        # keep at least one control step before the horizon
        t0 = float(rng.uniform(0.0, t_final))
        t0 = min(t0, max(0.0, t_final - dt))
    else:
        t0 = 0.0
    state = ref_fn(t0)
    if mode is not ResetMode.FIXED and scale > 0:
        state = state + rng.uniform(-1.0, 1.0, size=state.shape) * scale * spans
    return t0, state


class TTFSEnv:
    """Deployment environment.

    ``kind`` selects the learned channels: tether (3 reel voltages), satellite
    (6 thrusts, reels driven by baseline plus the optional frozen
    ``tether_policy``) or centralized (all 9).  ``tether_policy`` maps a
    normalised tether observation to a normalised action in [0, 1].
    """

    def __init__(self, cfg: ExperimentConfig, kind: EnvKind | str = EnvKind.TETHER,
                 seed: int | None = None, reset_mode: ResetMode | str = ResetMode.RANDOM,
                 normalize_obs: bool = True,
                 tether_policy: Callable[[np.ndarray], np.ndarray] | None = None):
        self.cfg = cfg
        self.kind = EnvKind(kind)
        self.reset_mode = ResetMode(reset_mode)
        self.normalize_obs = normalize_obs
        self.tether_policy = tether_policy
        self.rng = np.random.default_rng(seed)
        self.p = cfg.system
        self.rp: ReferenceParams = cfg.reference
        self.ep: EpisodeConfig = cfg.episode
        self.rew: RewardParams = cfg.reward
        self.gains = cfg.gains.gain_set()
        self.act = cfg.bounds.actuators()
        self.dist = cfg.disturbance.spec()
        self.tb = tether_bounds(cfg)
        self.sb = satellite_bounds(cfg)
        if self.kind is EnvKind.TETHER:
            self.bounds = self.tb
        elif self.kind is EnvKind.SATELLITE:
            self.bounds = self.sb
        else:
            self.bounds = _concat_bounds(self.tb, self.sb)
        self.obs_dim = self.bounds.s_min.size
        self.act_dim = self.bounds.a_min.size
        self.clip_count = 0
        self.t = 0.0
        self.t_start = 0.0
        self.eps: np.ndarray | None = None
        self.eta: np.ndarray | None = None
        self.steps = 0
        self.max_steps = 0

    # the zero-compensation normalised action
    @property
    def neutral_action(self) -> np.ndarray:
        return normalize_action(np.zeros(self.act_dim), self.bounds)

    @property
    def reward_floor(self) -> float:
        if self.kind is EnvKind.TETHER:
            return self.rew.tether_floor
        if self.kind is EnvKind.SATELLITE:
            return self.rew.satellite_floor
        return self.rew.tether_floor + self.rew.satellite_floor

    @property
    def uses_satellites(self) -> bool:
        return self.kind is not EnvKind.TETHER

    def reset(self, t_start: float | None = None) -> np.ndarray:
        tb_err_span = (self.tb.s_max - self.tb.s_min)[12:18]
        t0, eta = reset_state(self.reset_mode, self.rp.t_final, self.ep.dt, tb_err_span,
                              self.ep.reset_scale_tether, lambda t: tether_reference(t, self.rp),
                              self.rng, t_start)
        self.eta = eta
        if self.uses_satellites:
            sb_err_span = (self.sb.s_max - self.sb.s_min)[24:36]
            _, eps = reset_state(self.reset_mode, self.rp.t_final, self.ep.dt, sb_err_span,
                                 self.ep.reset_scale_satellite,
                                 lambda t: satellite_reference(t, self.rp),
                                 self.rng, t0)
            self.eps = eps
        else:
            self.eps = None
        self.t = t0
        self.t_start = t0
        self.steps = 0
        self.max_steps = max(1, math.ceil((self.rp.t_final - t0) / self.ep.dt - 1e-9))
        return self.observe()

    # observations ------------------------------------------------------
    def raw_tether_obs(self) -> np.ndarray:
        ref = tether_reference(self.t, self.rp)
        return np.concatenate([ref, self.eta, ref - self.eta])

    def raw_satellite_obs(self) -> np.ndarray:
        ref = satellite_reference(self.t, self.rp)
        return np.concatenate([ref, self.eps, ref - self.eps])

    def raw_obs(self) -> np.ndarray:
        if self.kind is EnvKind.TETHER:
            return self.raw_tether_obs()
        if self.kind is EnvKind.SATELLITE:
            return self.raw_satellite_obs()
        return np.concatenate([self.raw_tether_obs(), self.raw_satellite_obs()])

    def _scale(self, raw, bounds):
        if not self.normalize_obs:
            return raw
        z, clipped = normalize(raw, bounds)
        self.clip_count += clipped
        return z

    def observe(self) -> np.ndarray:
        return self._scale(self.raw_obs(), self.bounds)

    # control -------------------------------------------------------------
    def _split_action(self, a_norm):
        raw = denormalize_action(a_norm, self.bounds)
        if self.kind is EnvKind.TETHER:
            return raw, None
        if self.kind is EnvKind.SATELLITE:
            return None, raw
        return raw[:3], raw[3:]

    def controls(self, a_norm) -> tuple[np.ndarray, np.ndarray | None, dict]:
        """Total reel voltage and thrust for the current state and learned action."""
        nu_l, u_l = self._split_action(a_norm)
        eta_r = tether_reference(self.t, self.rp)
        nu_b = tether_baseline(self.eta - eta_r, self.gains.K1, self.act.nu_max)
        if nu_l is None:
            nu_l = np.zeros(3)
            if self.tether_policy is not None:
                obs_t = self.raw_tether_obs()
                if self.normalize_obs:
                    obs_t, _ = normalize(obs_t, self.tb)
                nu_l = denormalize_action(np.clip(self.tether_policy(obs_t), 0.0, 1.0), self.tb)
        nu = np.clip(nu_b + nu_l, -self.act.nu_max, self.act.nu_max)
        u = None
        info = {"nu_b": nu_b, "nu_l": nu_l}
        if self.uses_satellites:
            eps_r = satellite_reference(self.t, self.rp)
            u_b = satellite_baseline(self.eps - eps_r, self.gains.K2, self.act.u_max)
            if u_l is None:
                u_l = np.zeros(6)
            u = np.clip(u_b + u_l, -self.act.u_max, self.act.u_max)
            info.update(u_b=u_b, u_l=u_l)
        return nu, u, info

    def rewards(self, u) -> dict:
        out = {}
        if self.kind is not EnvKind.SATELLITE:
            out["tether"] = reward_tether(tether_reference(self.t, self.rp) - self.eta, self.rew)
        if self.uses_satellites:
            e_sat = satellite_reference(self.t, self.rp) - self.eps
            sr = reward_satellite(e_sat, u, self.eps[:6], self.eta[:3], self.rew)
            out.update(tracking=sr.tracking, energy=sr.energy, distance=sr.distance)
        return out

    def termination(self) -> DoneReason:
        reasons = []
        if self.kind is not EnvKind.SATELLITE:
            e = tether_reference(self.t, self.rp) - self.eta
            goal = np.max(np.abs(e) / (self.tb.s_max - self.tb.s_min)[12:18])
            reasons.append(check_termination(np.linalg.norm(e[:3]), self.ep.theta1, self.t,
                                             self.rp.t_final, goal, self.ep.goal_tol, self.ep.dt))
        if self.uses_satellites:
            e = satellite_reference(self.t, self.rp) - self.eps
            goal = np.max(np.abs(e) / (self.sb.s_max - self.sb.s_min)[24:36])
            reasons.append(check_termination(np.linalg.norm(e[:6]), self.ep.theta2, self.t,
                                             self.rp.t_final, goal, self.ep.goal_tol, self.ep.dt))
        for reason in (DoneReason.DIVERGENCE, DoneReason.HORIZON, DoneReason.GOAL):
            if reason in reasons:
                return reason
        return DoneReason.NONE

    def step(self, a_norm) -> Transition:
        if self.eta is None:
            raise RuntimeError("call reset() before step()")
        a_norm = np.asarray(a_norm, dtype=np.float64)
        s = self.observe()
        nu, u, info = self.controls(a_norm)
        t0 = self.t
        dt = self.ep.dt
        try:
            if self.uses_satellites:
                x = advance_coupled(np.concatenate([self.eps, self.eta]), u, nu, t0, dt,
                                    self.ep.substeps, self.dist, self.p)
                if np.any(x[12:15] <= 0):
                    raise NonFiniteStateError("tether length reached zero")
                self.eps, self.eta = x[:12], x[12:]
            else:
                eta = advance_reel(self.eta, nu, t0, dt, self.ep.substeps, self.dist, self.p)
                if np.any(eta[:3] <= 0):
                    raise NonFiniteStateError("tether length reached zero")
                self.eta = eta
            failed = False
        except (NonFiniteStateError, CoincidentSatellitesError):
            failed = True
        self.steps += 1
        self.t = self.t_start + self.steps * dt
        remaining = self.max_steps - self.steps
        if failed:
            comps = {}
            reward = self.reward_floor
            reason = DoneReason.DIVERGENCE
            s_next = s.copy()
        else:
            try:
                comps = self.rewards(u)
                reward = float(sum(comps.values()))
                reason = self.termination()
            except CoincidentSatellitesError:
                comps, reward, reason = {}, self.reward_floor, DoneReason.DIVERGENCE
            s_next = self.observe()
        penalty = 0.0
        if reason is DoneReason.DIVERGENCE:
            penalty = divergence_penalty(self.reward_floor, remaining, self.cfg.sac.gamma)
        info.update(t=self.t, nu=nu, u=u, components=comps, penalty=penalty)
        return Transition(s=s, a=a_norm.copy(), r=reward + penalty, s_next=s_next,
                          done=reason is not DoneReason.NONE, done_reason=reason, info=info)


class TransitionLogger:
    """Streams per-step rows (time, raw state, action, reward parts, reason) to CSV."""

    def __init__(self, path, env: TTFSEnv):
        self.env = env
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        n_state = env.obs_dim
        header = ["t"] + [f"obs{k}" for k in range(n_state)] + [f"a{k}" for k in range(env.act_dim)]
        header += ["reward", "r_tether", "r_tracking", "r_energy", "r_distance", "penalty", "done_reason"]
        self._writer.writerow(header)

    def log(self, tr: Transition) -> None:
        comps = tr.info.get("components", {})
        row = [repr(tr.info["t"])] + [repr(float(v)) for v in self.env.raw_obs()]
        row += [repr(float(v)) for v in tr.a] + [repr(tr.r)]
        row += [repr(float(comps.get(k, 0.0))) for k in ("tether", "tracking", "energy", "distance")]
        row += [repr(tr.info.get("penalty", 0.0)), tr.done_reason.value]
        self._writer.writerow(row)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
