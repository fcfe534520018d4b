"""Deterministic evaluation episodes, tracking/energy/tension metrics,
report comparison and plotting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .dynamics import separations
from .env import DoneReason, EnvKind, ResetMode, TTFSEnv
from .reference import satellite_reference, tether_reference

STEADY_FRACTION = 0.2
ELONGATION_BAND = 2.5  # percent

SERIES_COLUMNS = (["t"] + [f"e_l{k}" for k in range(6)] + [f"e_sat{k}" for k in range(12)]
                  + [f"elong{k}" for k in range(3)] + [f"u{k}" for k in range(6)]
                  + [f"nu{k}" for k in range(3)] + ["u_norm", "r_tether", "r_tracking", "r_energy",
                                                    "r_distance"])

SCALAR_FIELDS = ["rms_length", "rms_rate", "rms_position", "rms_velocity",
                 "ss_length", "ss_rate", "ss_position", "ss_velocity",
                 "max_length_post", "max_position_post",
                 "min_elongation", "max_elongation", "elongation_within",
                 "isv_u", "isv_nu", "duration"]

# metrics where a larger value is the better one
_HIGHER_IS_BETTER = {"elongation_within", "duration"}
# metrics compared by magnitude
_ABS_METRICS = {"min_elongation", "max_elongation"}


def isv(t, values) -> float:
    """Trapezoid integral of the squared norm of ``values`` (rows) over ``t``."""
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    sq = np.sum(v * v, axis=1) if v.ndim == 2 else v * v
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t)))


def rms_norm(rows) -> float:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        return math.nan
    return float(math.sqrt(np.mean(np.sum(rows * rows, axis=1))))


def elongation(r_sat, lengths) -> np.ndarray:
    """Percent stretch of each tether, (separation / natural length - 1) * 100."""
    return (separations(r_sat) / np.asarray(lengths, dtype=np.float64) - 1.0) * 100.0


@dataclass
class EvalReport:
    series: np.ndarray               # rows laid out as SERIES_COLUMNS
    done_reason: str
    config_hash: str
    label: str = "baseline"
    transient: float = 0.0
    scalars: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.series.ndim != 2 or self.series.shape[0] < 2:
            raise ValueError("report needs at least two time samples")
        if not self.scalars:
            self.scalars = compute_scalars(self.series, self.transient)

    def column(self, name: str) -> np.ndarray:
        return self.series[:, SERIES_COLUMNS.index(name)]

    def block(self, prefix: str, n: int) -> np.ndarray:
        i = SERIES_COLUMNS.index(f"{prefix}0")
        return self.series[:, i:i + n]

    def __getattr__(self, name):
        scalars = self.__dict__.get("scalars", {})
        if name in scalars:
            return scalars[name]
        raise AttributeError(name)

    def summary_rows(self) -> list[tuple[str, str]]:
        rows = [(k, repr(float(self.scalars[k]))) for k in SCALAR_FIELDS]
        rows += [("done_reason", self.done_reason), ("config_hash", self.config_hash),
                 ("label", self.label),
                 ("steady_state_window", f"final {STEADY_FRACTION:.0%} of the episode")]
        return rows

    def write(self, series_path, summary_path) -> None:
        for p in (series_path, summary_path):
            Path(p).parent.mkdir(parents=True, exist_ok=True)
        with open(series_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for row in self.series:
                w.writerow([repr(float(v)) for v in row])
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            w.writerows(self.summary_rows())


def compute_scalars(series: np.ndarray, transient: float) -> dict:
    t = series[:, 0]
    c = SERIES_COLUMNS.index
    e_l = series[:, c("e_l0"):c("e_l0") + 6]
    e_sat = series[:, c("e_sat0"):c("e_sat0") + 12]
    elong = series[:, c("elong0"):c("elong0") + 3]
    u = series[:, c("u0"):c("u0") + 6]
    nu = series[:, c("nu0"):c("nu0") + 3]
    n = t.size
    ss = slice(n - max(1, int(math.ceil(STEADY_FRACTION * n))), n)
    post = t >= t[0] + transient
    if not np.any(post):
        post = np.ones(n, dtype=bool)
    finite_elong = elong[np.all(np.isfinite(elong), axis=1)]
    return {
        "rms_length": rms_norm(e_l[:, :3]), "rms_rate": rms_norm(e_l[:, 3:]),
        "rms_position": rms_norm(e_sat[:, :6]), "rms_velocity": rms_norm(e_sat[:, 6:]),
        "ss_length": rms_norm(e_l[ss, :3]), "ss_rate": rms_norm(e_l[ss, 3:]),
        "ss_position": rms_norm(e_sat[ss, :6]), "ss_velocity": rms_norm(e_sat[ss, 6:]),
        "max_length_post": float(np.max(np.linalg.norm(e_l[post, :3], axis=1))),
        "max_position_post": float(np.max(np.linalg.norm(e_sat[post, :6], axis=1))),
        "min_elongation": float(np.min(finite_elong)) if finite_elong.size else math.nan,
        "max_elongation": float(np.max(finite_elong)) if finite_elong.size else math.nan,
        "elongation_within": float(np.mean(np.all(np.abs(elong) <= ELONGATION_BAND, axis=1))),
        "isv_u": isv(t, u), "isv_nu": isv(t, nu), "duration": float(t[-1] - t[0]),
    }


def _row(env: TTFSEnv, nu, u, comps) -> list:
    e_l = tether_reference(env.t, env.rp) - env.eta
    e_sat = satellite_reference(env.t, env.rp) - env.eps
    el = elongation(env.eps[:6], env.eta[:3])
    return ([env.t, *e_l, *e_sat, *el, *u, *nu, float(np.linalg.norm(u)),
             comps.get("tether", 0.0), comps.get("tracking", 0.0), comps.get("energy", 0.0),
             comps.get("distance", 0.0)])


def evaluate(cfg: ExperimentConfig, seed: int = 0, tether_policy=None, satellite_policy=None,
             centralized_policy=None, reset_mode: ResetMode | str = ResetMode.START,
             t_final: float | None = None, label: str | None = None) -> EvalReport:
    """One deterministic closed-loop episode of the full formation.

    Without policies this is the baseline-only run.  Policies are callables
    from a normalised observation to a normalised action (mean action).
    Divergence ends the episode early and is recorded in ``done_reason``.
    """
    if t_final is not None:
        cfg = cfg.replace(reference={"t_final": t_final})
    normalize = True
    for pol in (tether_policy, satellite_policy, centralized_policy):
        if pol is not None and hasattr(pol, "normalize"):
            normalize = pol.normalize
    if centralized_policy is not None:
        env = TTFSEnv(cfg, EnvKind.CENTRALIZED, seed=seed, reset_mode=reset_mode, normalize_obs=normalize)
        policy = centralized_policy
    else:
        env = TTFSEnv(cfg, EnvKind.SATELLITE, seed=seed, reset_mode=reset_mode, normalize_obs=normalize,
                      tether_policy=tether_policy)
        policy = satellite_policy
    obs = env.reset()
    rows = []
    reason = DoneReason.NONE
    while True:
        a = env.neutral_action if policy is None else np.clip(policy(obs), 0.0, 1.0)
        nu, u, _ = env.controls(a)
        rows.append(_row(env, nu, u, env.rewards(u)))
        tr = env.step(a)
        obs = tr.s_next
        if tr.done:
            reason = tr.done_reason
            # a failed integration leaves no valid final state to record
            if tr.info.get("components"):
                a = env.neutral_action if policy is None else np.clip(policy(obs), 0.0, 1.0)
                nu, u, _ = env.controls(a)
                rows.append(_row(env, nu, u, env.rewards(u)))
            break
    series = np.array(rows, dtype=np.float64)
    if label is None:
        label = "baseline" if policy is None and tether_policy is None else "compensated"
    return EvalReport(series=series, done_reason=reason.value, config_hash=cfg.config_hash(),
                      label=label, transient=cfg.episode.transient)


class ConfigMismatchError(ValueError):
    pass


def compare(a: EvalReport, b: EvalReport) -> list[dict]:
    """Per-metric ratio b/a, reduction (1 - b/a) * 100 and the winning side."""
    if a.config_hash != b.config_hash:
        raise ConfigMismatchError(f"reports use different configs ({a.config_hash} vs {b.config_hash})")
    rows = []
    for key in SCALAR_FIELDS:
        va, vb = float(a.scalars[key]), float(b.scalars[key])
        ma, mb = (abs(va), abs(vb)) if key in _ABS_METRICS else (va, vb)
        ratio = mb / ma if ma != 0 else (1.0 if mb == 0 else math.inf)
        if key in _HIGHER_IS_BETTER:
            winner = "a" if ma > mb else "b" if mb > ma else "tie"
        else:
            winner = "a" if ma < mb else "b" if mb < ma else "tie"
        rows.append({"metric": key, "a": va, "b": vb, "ratio": ratio,
                     "reduction_pct": (1.0 - ratio) * 100.0, "winner": winner})
    return rows


def write_comparison(rows: list[dict], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["metric", "a", "b", "ratio", "reduction_pct", "winner"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def read_summary(path) -> EvalReport:
    """Rebuild a report from its series CSV (``*-series.csv``) and summary CSV."""
    path = Path(path)
    series_path = path.with_name(path.name.replace("-summary", "-series"))
    with open(path, newline="", encoding="utf-8") as fh:
        meta = dict(list(csv.reader(fh))[1:])
    series = np.loadtxt(series_path, delimiter=",", skiprows=1, ndmin=2)
    scalars = {k: float(meta[k]) for k in SCALAR_FIELDS}
    return EvalReport(series=series, done_reason=meta["done_reason"], config_hash=meta["config_hash"],
                      label=meta.get("label", ""), scalars=scalars)


PLOT_KINDS = ("tether_error", "satellite_error", "elongation", "thrust", "training")


def emit_plots(reports, out_dir, kinds=PLOT_KINDS[:4], training_logs=()) -> list[Path]:
    """SVG figure plus a CSV of the plotted data for each requested kind."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    reports = list(reports)
    if not reports and kinds != ("training",):
        raise ValueError("no reports to plot")
    for r in reports:
        if r.series.shape[0] == 0:
            raise ValueError("empty report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in kinds:
        if kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {kind}")
        fig, ax = plt.subplots(figsize=(7, 4))
        header, columns = ["t"], []
        if kind == "training":
            for log in training_logs:
                data = np.genfromtxt(log, delimiter=",", names=True, dtype=None, encoding="utf-8")
                ax.plot(data["episode"], data["reward"], lw=0.6, label=Path(log).stem)
                header = ["episode", "reward"]
                columns = [data["episode"], data["reward"]]
            ax.set_xlabel("episode")
            ax.set_ylabel("episode reward")
        else:
            t = reports[0].column("t")
            header, columns = ["t"], [t]
            for r in reports:
                if kind == "tether_error":
                    y = np.linalg.norm(r.block("e_l", 3), axis=1)
                    ylabel = "length error norm (m)"
                elif kind == "satellite_error":
                    y = np.linalg.norm(r.block("e_sat", 6), axis=1)
                    ylabel = "position error norm (m)"
                elif kind == "elongation":
                    y = r.block("elong", 3)
                    ylabel = "elongation (%)"
                else:
                    y = r.column("u_norm")
                    ylabel = "thrust norm (m/s^2)"
                ax.plot(r.column("t"), y, lw=0.8, label=r.label)
                n = min(len(t), len(y))
                if y.ndim == 1:
                    header.append(r.label)
                    columns.append(y[:n])
                else:
                    header += [f"{r.label}_{k}" for k in range(y.shape[1])]
                    columns += [y[:n, k] for k in range(y.shape[1])]
            ax.set_xlabel("t (s)")
            ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        fig.tight_layout()
        svg = out_dir / f"{kind}.svg"
        fig.savefig(svg, format="svg")
        plt.close(fig)
        n = min(len(c) for c in columns) if columns else 0
        with open(out_dir / f"{kind}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(n):
                w.writerow([repr(float(c[i])) for c in columns])
        written.append(svg)
    return written
