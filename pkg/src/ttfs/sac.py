"""Soft actor-critic: replay buffer, twin critics with Polyak targets,
reparameterised actor update and automatic temperature tuning."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import SacConfig
from .env import DoneReason, Transition
from .nn import Adam, GaussianPolicyHead, Mlp, clip_grad_norm


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, nonpositive_rewards: bool = True):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.nonpositive_rewards = nonpositive_rewards
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, obs_dim))
        self.terminal = np.zeros(self.capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        s = np.asarray(tr.s, dtype=np.float64)
        a = np.asarray(tr.a, dtype=np.float64)
        s2 = np.asarray(tr.s_next, dtype=np.float64)
        if s.shape != (self.obs_dim,) or s2.shape != (self.obs_dim,) or a.shape != (self.act_dim,):
            raise ValueError("transition shapes do not match the buffer")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(s2)) and math.isfinite(tr.r)):
            raise ValueError("transition contains non-finite values")
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise ValueError("normalised action outside [0, 1]")
        if self.nonpositive_rewards and tr.r > 0.0:
            raise ValueError(f"reward must be <= 0, got {tr.r}")
        k = self.cursor
        self.s[k], self.a[k], self.r[k], self.s2[k] = s, a, tr.r, s2
        self.terminal[k] = float(tr.terminal)
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx], "s2": self.s2[idx],
                "terminal": self.terminal[idx], "idx": idx}


class SacAgent:
    def __init__(self, obs_dim: int, act_dim: int, cfg: SacConfig, seed: int | None = 0):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        hidden = (cfg.hidden,) * cfg.n_hidden
        self.actor = GaussianPolicyHead(obs_dim, act_dim, hidden, self.rng)
        self.q1 = Mlp([obs_dim + act_dim, *hidden, 1], self.rng)
        self.q2 = Mlp([obs_dim + act_dim, *hidden, 1], self.rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array([math.log(cfg.init_temperature)])
        self.target_entropy = -float(act_dim) if cfg.target_entropy is None else cfg.target_entropy
        self.actor_opt = Adam(self.actor.net.params, cfg.lr)
        self.q1_opt = Adam(self.q1.params, cfg.lr)
        self.q2_opt = Adam(self.q2.params, cfg.lr)
        self.alpha_opt = Adam([self.log_alpha], cfg.lr)
        self.updates = 0
        self.nonfinite_events = 0

    @property
    def alpha(self) -> float:
        return math.exp(float(self.log_alpha[0]))

    def act(self, s, deterministic: bool = False) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if deterministic:
            return self.actor.mean_action(s)
        noise = self.rng.standard_normal(s.shape[:-1] + (self.act_dim,))
        a, _, _ = self.actor.rsample(s, noise)
        return a

    # checkpoint records ---------------------------------------------------
    def records(self) -> dict:
        rec = {"actor": self.actor.net, "q1": self.q1, "q2": self.q2,
               "q1_target": self.q1_target, "q2_target": self.q2_target,
               "log_alpha": self.log_alpha.copy(),
               "counters": np.array([self.updates, self.nonfinite_events, self.obs_dim, self.act_dim],
                                    dtype=np.float64),
               "rng": json.dumps(self.rng.bit_generator.state).encode()}
        for name, opt in self._optimizers().items():
            rec[f"{name}.t"] = np.array([opt.t, opt.skipped], dtype=np.float64)
            for k, (m, v) in enumerate(zip(opt.m, opt.v)):
                rec[f"{name}.m{k}"] = m
                rec[f"{name}.v{k}"] = v
        return rec

    def _optimizers(self) -> dict:
        return {"actor_opt": self.actor_opt, "q1_opt": self.q1_opt, "q2_opt": self.q2_opt,
                "alpha_opt": self.alpha_opt}

    @classmethod
    def from_records(cls, rec: dict, cfg: SacConfig) -> "SacAgent":
        counters = rec["counters"]
        obs_dim, act_dim = int(counters[2]), int(counters[3])
        agent = cls.__new__(cls)
        agent.obs_dim, agent.act_dim, agent.cfg = obs_dim, act_dim, cfg
        agent.rng = np.random.default_rng()
        agent.rng.bit_generator.state = json.loads(rec["rng"].decode())
        agent.actor = GaussianPolicyHead(obs_dim, act_dim, net=rec["actor"])
        agent.q1, agent.q2 = rec["q1"], rec["q2"]
        agent.q1_target, agent.q2_target = rec["q1_target"], rec["q2_target"]
        agent.log_alpha = np.array(rec["log_alpha"], dtype=np.float64)
        agent.target_entropy = -float(act_dim) if cfg.target_entropy is None else cfg.target_entropy
        agent.actor_opt = Adam(agent.actor.net.params, cfg.lr)
        agent.q1_opt = Adam(agent.q1.params, cfg.lr)
        agent.q2_opt = Adam(agent.q2.params, cfg.lr)
        agent.alpha_opt = Adam([agent.log_alpha], cfg.lr)
        for name, opt in agent._optimizers().items():
            opt.t, opt.skipped = (int(x) for x in rec[f"{name}.t"])
            opt.m = [np.array(rec[f"{name}.m{k}"]) for k in range(len(opt.params))]
            opt.v = [np.array(rec[f"{name}.v{k}"]) for k in range(len(opt.params))]
        agent.updates, agent.nonfinite_events = int(counters[0]), int(counters[1])
        return agent


def _qin(s, a):
    return np.concatenate([s, a], axis=1)


def compute_target(batch: dict, agent: SacAgent, gamma: float, noise=None) -> np.ndarray:
    """Soft Bellman target from the smaller target critic; terminal samples do not bootstrap."""
    s2 = batch["s2"]
    if noise is None:
        noise = agent.rng.standard_normal((s2.shape[0], agent.act_dim))
    a2, logp2, _ = agent.actor.rsample(s2, noise)
    x = _qin(s2, a2)
    q_next = np.minimum(agent.q1_target(x)[:, 0], agent.q2_target(x)[:, 0])
    return batch["r"] + (1.0 - batch["terminal"]) * gamma * (q_next - agent.alpha * logp2)


def _regress(net: Mlp, opt: Adam, x, y, clip: float) -> float:
    q, cache = net.forward(x, cache=True)
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    if not math.isfinite(loss):
        return loss
    grads, _ = net.backward(cache, (2.0 / len(y)) * err[:, None])
    clip_grad_norm(grads, clip)
    opt.step(grads)
    return loss


def critic_update(agent: SacAgent, batch: dict, y: np.ndarray) -> tuple[float, float]:
    """One optimiser step per critic on the mean squared error to ``y``; returns pre-step losses."""
    x = _qin(batch["s"], batch["a"])
    losses = []
    for net, opt in ((agent.q1, agent.q1_opt), (agent.q2, agent.q2_opt)):
        loss = _regress(net, opt, x, y, agent.cfg.grad_clip)
        if not math.isfinite(loss):
            agent.nonfinite_events += 1
        losses.append(loss)
    return losses[0], losses[1]


def actor_update(agent: SacAgent, batch: dict, noise=None) -> tuple[float, np.ndarray]:
    """Minimise mean(alpha log pi(a~|s) - min_p Q_p(s, a~)); critics are left untouched.

    Returns the pre-step loss and the batch log-probabilities.
    """
    s = batch["s"]
    n = s.shape[0]
    if noise is None:
        noise = agent.rng.standard_normal((n, agent.act_dim))
    a, logp, cache = agent.actor.rsample(s, noise)
    x = _qin(s, a)
    q1, c1 = agent.q1.forward(x, cache=True)
    q2, c2 = agent.q2.forward(x, cache=True)
    pick1 = (q1[:, 0] <= q2[:, 0])[:, None].astype(np.float64)
    q_min = np.minimum(q1[:, 0], q2[:, 0])
    alpha = agent.alpha
    loss = float(np.mean(alpha * logp - q_min))
    if not math.isfinite(loss):
        agent.nonfinite_events += 1
        return loss, logp
    _, gx1 = agent.q1.backward(c1, -pick1 / n)
    _, gx2 = agent.q2.backward(c2, -(1.0 - pick1) / n)
    grad_a = (gx1 + gx2)[:, agent.obs_dim:]
    grads = agent.actor.backward(cache, grad_a, np.full(n, alpha / n))
    clip_grad_norm(grads, agent.cfg.grad_clip)
    agent.actor_opt.step(grads)
    return loss, logp


def temperature_update(agent: SacAgent, logp: np.ndarray) -> float:
    """Gradient step on log(alpha) for mean(-alpha (log pi + H0)); returns the new alpha."""
    grad = -agent.alpha * float(np.mean(logp + agent.target_entropy))
    if math.isfinite(grad):
        agent.alpha_opt.step([np.array([grad])])
    else:
        agent.nonfinite_events += 1
    return agent.alpha


def polyak_update(agent: SacAgent, tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    for online, target in ((agent.q1, agent.q1_target), (agent.q2, agent.q2_target)):
        for p, pt in zip(online.params, target.params):
            pt *= 1.0 - tau
            pt += tau * p


def update(agent: SacAgent, buf: ReplayBuffer) -> dict:
    """One full gradient phase: critics, actor, temperature, targets."""
    cfg = agent.cfg
    batch = buf.sample(cfg.batch_size, agent.rng)
    y = compute_target(batch, agent, cfg.gamma)
    l1, l2 = critic_update(agent, batch, y)
    la, logp = actor_update(agent, batch)
    alpha = temperature_update(agent, logp)
    polyak_update(agent, cfg.tau)
    agent.updates += 1
    return {"q1_loss": l1, "q2_loss": l2, "actor_loss": la, "alpha": alpha,
            "entropy": -float(np.mean(logp))}


MAX_NONFINITE = 100


@dataclass
class EpisodeStats:
    episode: int
    steps: int
    reward: float
    length: int
    done_reason: str
    q1_loss: float
    q2_loss: float
    actor_loss: float
    alpha: float


class SacRunner:
    """Owns the interaction loop: warmup with uniform actions, then sample-and-update."""

    def __init__(self, agent: SacAgent, env, buf: ReplayBuffer):
        self.agent = agent
        self.env = env
        self.buf = buf
        self.steps = 0
        self.episode = 0
        self.obs = env.reset()
        self.ep_reward = 0.0
        self.ep_length = 0
        self.last_losses = {"q1_loss": math.nan, "q2_loss": math.nan, "actor_loss": math.nan}

    def train_step(self) -> dict:
        agent = self.agent
        cfg = agent.cfg
        if self.steps < cfg.warmup_steps:
            a = agent.rng.uniform(0.0, 1.0, size=agent.act_dim)
        else:
            a = agent.act(self.obs)
        tr = self.env.step(a)
        self.buf.push(tr)
        self.steps += 1
        self.ep_reward += tr.r
        self.ep_length += 1
        diag = {"step": self.steps, "reward": tr.r, "done": tr.done}
        if self.steps >= cfg.warmup_steps and len(self.buf) >= cfg.batch_size:
            for _ in range(cfg.updates_per_step):
                self.last_losses = update(agent, self.buf)
            diag.update(self.last_losses)
        if agent.nonfinite_events > MAX_NONFINITE:
            raise FloatingPointError(f"aborting: {agent.nonfinite_events} non-finite update events")
        if tr.done:
            self.episode += 1
            diag["episode_stats"] = EpisodeStats(
                episode=self.episode, steps=self.steps, reward=self.ep_reward, length=self.ep_length,
                done_reason=tr.done_reason.value,
                q1_loss=self.last_losses["q1_loss"], q2_loss=self.last_losses["q2_loss"],
                actor_loss=self.last_losses["actor_loss"], alpha=agent.alpha)
            self.obs = self.env.reset()
            self.ep_reward = 0.0
            self.ep_length = 0
        else:
            self.obs = tr.s_next
        return diag

    def run_episode(self) -> EpisodeStats:
        while True:
            diag = self.train_step()
            if "episode_stats" in diag:
                return diag["episode_stats"]


class QuadraticBandit:
    """Single-state task with reward -(a - optimum)^2; every step ends the episode."""

    obs_dim = 1
    act_dim = 1

    def __init__(self, optimum: float = 0.7):
        self.optimum = optimum
        self._s = np.array([0.5])

    def reset(self) -> np.ndarray:
        return self._s.copy()

    def step(self, a) -> Transition:
        a = np.asarray(a, dtype=np.float64)
        r = -float((a[0] - self.optimum) ** 2)
        return Transition(s=self._s.copy(), a=a.copy(), r=r, s_next=self._s.copy(), done=True,
                          done_reason=DoneReason.GOAL, info={"terminal": True})
