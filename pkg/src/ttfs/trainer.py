"""Two-stage training (tether policy, then satellite policy with the tether
policy frozen inside its environment) and the reset/framework/normalisation
ablation matrix."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_config
from .env import EnvKind, ResetMode, TTFSEnv
from .nn import GaussianPolicyHead, load_checkpoint, save_checkpoint
from .sac import ReplayBuffer, SacAgent, SacRunner


class Stage(str, Enum):
    TETHER = "tether"
    SATELLITE = "satellite"


class Framework(str, Enum):
    HIERARCHICAL = "hierarchical"
    CENTRALIZED = "centralized"


class MissingCheckpointError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class StagePlan:
    stage: Stage = Stage.TETHER
    episodes: int = 500
    window: int = 50
    threshold: float = 0.02
    min_completion: float = 0.95
    reset_mode: ResetMode = ResetMode.RANDOM
    normalize: bool = True
    framework: Framework = Framework.HIERARCHICAL
    stop_on_convergence: bool = False

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "reset_mode", ResetMode(self.reset_mode))
        object.__setattr__(self, "framework", Framework(self.framework))
        if self.episodes < 1 or self.window < 1:
            raise ValueError("episodes and window must be >= 1")

    @property
    def env_kind(self) -> EnvKind:
        if self.framework is Framework.CENTRALIZED:
            return EnvKind.CENTRALIZED
        return EnvKind.TETHER if self.stage is Stage.TETHER else EnvKind.SATELLITE

    @property
    def name(self) -> str:
        return "centralized" if self.framework is Framework.CENTRALIZED else self.stage.value

    @classmethod
    def from_config(cls, stage: Stage | str, cfg: ExperimentConfig, paper_scale: bool = False,
                    **overrides) -> "StagePlan":
        stage = Stage(stage)
        tc = cfg.train
        if stage is Stage.TETHER:
            episodes = tc.paper_tether_episodes if paper_scale else tc.tether_episodes
        else:
            episodes = tc.paper_satellite_episodes if paper_scale else tc.satellite_episodes
        plan = cls(stage=stage, episodes=episodes, window=tc.window, threshold=tc.threshold,
                   min_completion=tc.min_completion)
        return replace(plan, **overrides)


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` entries."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    k = np.arange(1, v.size + 1)
    lo = np.maximum(0, k - window)
    return (c[k] - c[lo]) / (k - lo)


def convergence_episode(scores, completions, window: int, threshold: float,
                        min_completion: float) -> int | None:
    """First episode count at which two consecutive full windows agree.

    The mean score over the latest ``window`` episodes must differ from the
    previous window's mean by less than ``threshold`` (relative), and the mean
    completion fraction of the latest window must reach ``min_completion``.
    """
    s = np.asarray(scores, dtype=np.float64)
    c = np.asarray(completions, dtype=np.float64)
    for k in range(2 * window, s.size + 1):
        cur = s[k - window:k].mean()
        prev = s[k - 2 * window:k - window].mean()
        rel = abs(cur - prev) / max(abs(prev), 1e-12)
        if rel < threshold and c[k - window:k].mean() >= min_completion:
            return k
    return None


def params_digest(head: GaussianPolicyHead) -> str:
    h = hashlib.sha256()
    for p in head.net.params:
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


@dataclass
class TrainedPolicy:
    """Deterministic actor loaded from a stage checkpoint."""
    head: GaussianPolicyHead
    kind: EnvKind
    normalize: bool
    meta: dict

    def __call__(self, obs) -> np.ndarray:
        return self.head.mean_action(obs)


def load_policy(path) -> TrainedPolicy:
    if not Path(path).is_file():
        raise MissingCheckpointError(f"checkpoint not found: {path}")
    rec = load_checkpoint(path)
    meta = json.loads(rec["meta"].decode())
    counters = rec["counters"]
    head = GaussianPolicyHead(int(counters[2]), int(counters[3]), net=rec["actor"])
    return TrainedPolicy(head=head, kind=EnvKind(meta["env_kind"]), normalize=bool(meta["normalize"]),
                         meta=meta)


def load_agent(path) -> tuple[SacAgent, ExperimentConfig, dict]:
    rec = load_checkpoint(path)
    cfg = parse_config(rec["config"].decode())
    return SacAgent.from_records(rec, cfg.sac), cfg, json.loads(rec["meta"].decode())


@dataclass
class StageResult:
    plan: StagePlan
    checkpoint: Path
    log: Path
    rewards: list
    scores: list
    completions: list
    converged_at: int | None
    tether_digest_start: str | None = None
    tether_digest_end: str | None = None

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def window_mean(self, first: bool, n: int = 30) -> float:
        r = self.rewards[:n] if first else self.rewards[-n:]
        return float(np.mean(r))


LOG_COLUMNS = ["episode", "steps", "reward", "length", "completion", "reward_per_step",
               "done_reason", "q1_loss", "q2_loss", "actor_loss", "alpha", "moving_avg"]


def train_stage(plan: StagePlan, cfg: ExperimentConfig, seed: int, out_dir, tag: str,
                tether_checkpoint=None) -> StageResult:
    """Train one stage and write ``checkpoints/<stage>-<tag>.ckpt`` and ``logs/<stage>-<tag>.csv``.

    The score used by the convergence rule is the mean per-step reward of each
    episode, since randomised resets give episodes of different lengths.
    """
    out_dir = Path(out_dir)
    tether_policy = None
    if plan.env_kind is EnvKind.SATELLITE:
        if tether_checkpoint is None:
            raise MissingCheckpointError("hierarchical satellite stage needs a tether checkpoint")
        tether_policy = load_policy(tether_checkpoint)
        if tether_policy.kind is not EnvKind.TETHER:
            raise ValueError(f"{tether_checkpoint} does not hold a tether policy")
        if tether_policy.normalize != plan.normalize:
            raise ValueError("tether policy and satellite stage disagree on observation normalisation")
    seeds = np.random.SeedSequence(seed).spawn(2)
    env = TTFSEnv(cfg, plan.env_kind, seed=seeds[0], reset_mode=plan.reset_mode,
                  normalize_obs=plan.normalize, tether_policy=tether_policy)
    agent = SacAgent(env.obs_dim, env.act_dim, cfg.sac, seed=seeds[1])
    buf = ReplayBuffer(cfg.sac.buffer_size, env.obs_dim, env.act_dim)
    runner = SacRunner(agent, env, buf)
    digest_start = params_digest(tether_policy.head) if tether_policy else None

    ckpt_path = out_dir / "checkpoints" / f"{plan.name}-{tag}.ckpt"
    log_path = out_dir / "logs" / f"{plan.name}-{tag}.csv"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    (out_dir / "logs" / f"{plan.name}-{tag}.ini").write_text(cfg.to_ini(), encoding="utf-8")

    rewards, scores, completions = [], [], []
    converged_at = None
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for _ in range(plan.episodes):
            max_steps = env.max_steps
            st = runner.run_episode()
            rewards.append(st.reward)
            scores.append(st.reward / st.length)
            completions.append(st.length / max_steps)
            ma = moving_average(scores, plan.window)[-1]
            writer.writerow([st.episode, st.steps, repr(st.reward), st.length, repr(completions[-1]),
                             repr(scores[-1]), st.done_reason, repr(st.q1_loss), repr(st.q2_loss),
                             repr(st.actor_loss), repr(st.alpha), repr(float(ma))])
            fh.flush()
            if converged_at is None:
                converged_at = convergence_episode(scores, completions, plan.window, plan.threshold,
                                                   plan.min_completion)
                if converged_at is not None and plan.stop_on_convergence:
                    break

    meta = {"stage": plan.stage.value, "framework": plan.framework.value,
            "env_kind": plan.env_kind.value, "normalize": plan.normalize,
            "reset_mode": plan.reset_mode.value, "episodes": len(rewards), "seed": seed,
            "converged_at": converged_at, "config_hash": cfg.config_hash(), "buffer_size": len(buf),
            "steps": runner.steps}
    if plan.env_kind is EnvKind.CENTRALIZED:
        meta["action_split"] = {"tether": [0, 3], "satellite": [3, 9]}
    records = agent.records()
    records["config"] = cfg.to_ini().encode()
    records["meta"] = json.dumps(meta, sort_keys=True).encode()
    save_checkpoint(ckpt_path, records)
    digest_end = params_digest(tether_policy.head) if tether_policy else None
    if digest_start != digest_end:
        raise RuntimeError("frozen tether policy changed during satellite training")
    return StageResult(plan, ckpt_path, log_path, rewards, scores, completions, converged_at,
                       digest_start, digest_end)


# --- ablation ----------------------------------------------------------------

@dataclass(frozen=True)
class AblationCell:
    reset_mode: ResetMode
    framework: Framework
    normalize: bool

    @property
    def label(self) -> str:
        return f"{self.reset_mode.value}-{self.framework.value}-{'norm' if self.normalize else 'raw'}"


def full_matrix() -> list[AblationCell]:
    return [AblationCell(r, f, n) for r, f, n in itertools.product(
        (ResetMode.RANDOM, ResetMode.FIXED), (Framework.HIERARCHICAL, Framework.CENTRALIZED), (True, False))]


REPORT_COLUMNS = ["cell", "reset_mode", "framework", "normalize", "seed", "episodes", "converged",
                  "episodes_to_convergence", "final_window_reward", "final_window_score", "status",
                  "rank"]


def run_ablation(cells, seeds, cfg: ExperimentConfig, out_dir, tag: str, episodes: int,
                 satellite_episodes: int | None = None) -> list[dict]:
    """Train every (cell, seed) pair and write ``reports/ablation-<tag>.csv``.

    Hierarchical cells train the tether stage and, when ``satellite_episodes``
    is given, a satellite stage on top of it; the reported curve is that of
    the last stage.  Cells are ranked by episodes-to-convergence (fastest
    first, non-converged last).
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("ablation needs at least two seeds per cell")
    out_dir = Path(out_dir)
    rows = []
    for cell in cells:
        for seed in seeds:
            cell_tag = f"{tag}-{cell.label}-s{seed}"
            row = {"cell": cell.label, "reset_mode": cell.reset_mode.value,
                   "framework": cell.framework.value, "normalize": cell.normalize, "seed": seed}
            try:
                result = _run_cell(cell, seed, cfg, out_dir, cell_tag, episodes, satellite_episodes)
                window = cfg.train.window
                row.update(episodes=len(result.rewards), converged=result.converged,
                           episodes_to_convergence=result.converged_at,
                           final_window_reward=float(np.mean(result.rewards[-window:])),
                           final_window_score=float(np.mean(result.scores[-window:])),
                           status="converged" if result.converged else "did not converge")
            except Exception as exc:  # a failed cell is reported, not fatal
                row.update(episodes=0, converged=False, episodes_to_convergence=None,
                           final_window_reward=math.nan, final_window_score=math.nan,
                           status=f"failed: {type(exc).__name__}: {exc}")
            rows.append(row)
    rank_rows(rows)
    path = out_dir / "reports" / f"ablation-{tag}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in REPORT_COLUMNS})
    return rows


def rank_rows(rows: list[dict]) -> None:
    """Dense rank by episodes-to-convergence; non-converged rows share the last rank."""
    converged = sorted({r["episodes_to_convergence"] for r in rows if r["converged"]})
    last = len(converged) + 1
    for r in rows:
        r["rank"] = converged.index(r["episodes_to_convergence"]) + 1 if r["converged"] else last


def _run_cell(cell: AblationCell, seed, cfg, out_dir, tag, episodes, satellite_episodes) -> StageResult:
    tc = cfg.train
    common = dict(window=tc.window, threshold=tc.threshold, min_completion=tc.min_completion,
                  reset_mode=cell.reset_mode, normalize=cell.normalize)
    if cell.framework is Framework.CENTRALIZED:
        plan = StagePlan(stage=Stage.SATELLITE, framework=Framework.CENTRALIZED,
                         episodes=satellite_episodes or episodes, **common)
        return train_stage(plan, cfg, seed, out_dir, tag)
    tether = train_stage(StagePlan(stage=Stage.TETHER, episodes=episodes, **common), cfg, seed, out_dir, tag)
    if not satellite_episodes:
        return tether
    plan = StagePlan(stage=Stage.SATELLITE, episodes=satellite_episodes, **common)
    return train_stage(plan, cfg, seed, out_dir, tag, tether_checkpoint=tether.checkpoint)
