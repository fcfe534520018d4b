"""Experiment configuration: an INI file with one section per concern.

Every key has a default, so an empty file reproduces the standard deployment
setup.  Unknown sections or keys are rejected to catch typos early.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .baseline import ActuatorBounds, GainSet
from .dynamics import DisturbanceMode, DisturbanceSpec, SystemParams
from .reference import ReferenceParams


@dataclass(frozen=True)
class GainConfig:
    kp1: float = 40.0   # V/m
    kd1: float = 2.0    # V/(m/s)
    kp2: float = 0.04   # 1/s^2
    kd2: float = 0.28   # 1/s
    l_min: float = 1.0  # tether length used by the coupling certificate, m

    def gain_set(self) -> GainSet:
        return GainSet.pd(self.kp1, self.kd1, self.kp2, self.kd2)


@dataclass(frozen=True)
class BoundsConfig:
    nu_max: float = 10.0      # total reel voltage, V
    u_max: float = 0.02       # total thrust acceleration, m/s^2
    nu_l_max: float = 8.0     # learned reel voltage authority, V
    u_l_max: float = 0.02     # learned thrust authority, m/s^2
    vel_err_bound: float = 1.0  # satellite velocity-error observation bound, m/s
    vel_margin: float = 1.0     # satellite velocity observation margin, m/s

    def actuators(self) -> ActuatorBounds:
        return ActuatorBounds(nu_max=self.nu_max, u_max=self.u_max)


@dataclass(frozen=True)
class RewardParams:
    alpha1: float = 1.0
    alpha2: float = 2.5
    alpha3: float = 1.0
    alpha4: float = 7.0
    beta1: float = 1.0
    beta2: float = 1.5
    beta3: float = 100.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"reward weight {f.name} must be positive")

    @property
    def tether_floor(self) -> float:
        return -(self.alpha1 + self.alpha2)

    @property
    def satellite_floor(self) -> float:
        return -(self.alpha3 + self.alpha4 + self.beta1 + 3.0)


@dataclass(frozen=True)
class EpisodeConfig:
    theta1: float = 2.0        # tether length-error termination threshold, m
    theta2: float = 5.0        # satellite position-error termination threshold, m
    dt: float = 0.1            # control interval, s
    dt_reel: float = 0.02      # integration sub-step, s
    reset_scale_tether: float = 0.01      # reset perturbation, fraction of each error span
    reset_scale_satellite: float = 0.001  # smaller: at 1 m tethers 1% of span is a 10% strain
    goal_tol: float = 1e-3     # normalised error tolerance for the goal condition
    transient: float = 50.0    # s excluded from post-transient metrics

    def __post_init__(self):
        if not (self.theta1 > 0 and self.theta2 > 0):
            raise ValueError("termination thresholds must be positive")
        if not (self.dt > 0 and self.dt_reel > 0):
            raise ValueError("time steps must be positive")

    @property
    def substeps(self) -> int:
        return max(1, math.ceil(self.dt / self.dt_reel - 1e-9))


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    lr: float = 3e-5
    batch_size: int = 256
    buffer_size: int = 1_000_000
    total_steps: int = 10_000_000
    tau: float = 0.005
    init_temperature: float = 0.2
    target_entropy: float | None = None  # default: -(action dimension)
    updates_per_step: int = 1
    warmup_steps: int = 5000
    hidden: int = 256
    n_hidden: int = 2
    grad_clip: float = 10.0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size > self.buffer_size:
            raise ValueError("batch size exceeds buffer capacity")


@dataclass(frozen=True)
class TrainConfig:
    tether_episodes: int = 500
    satellite_episodes: int = 300
    paper_tether_episodes: int = 4000
    paper_satellite_episodes: int = 2000
    window: int = 50
    threshold: float = 0.02
    min_completion: float = 0.95


@dataclass(frozen=True)
class DisturbanceConfig:
    mode: str = "standard"
    scale: float = 1.0
    table: str = ""   # CSV path for custom-table mode

    def spec(self) -> DisturbanceSpec:
        mode = DisturbanceMode(self.mode)
        table = None
        if mode is DisturbanceMode.TABLE:
            import numpy as np
            table = np.loadtxt(self.table, delimiter=",", ndmin=2)
        return DisturbanceSpec(mode=mode, scale=self.scale, table=table)


_SECTIONS = {
    "system": SystemParams,
    "gains": GainConfig,
    "bounds": BoundsConfig,
    "reward": RewardParams,
    "sac": SacConfig,
    "episode": EpisodeConfig,
    "reference": ReferenceParams,
    "disturbance": DisturbanceConfig,
    "train": TrainConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParams = field(default_factory=SystemParams)
    gains: GainConfig = field(default_factory=GainConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    sac: SacConfig = field(default_factory=SacConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    reference: ReferenceParams = field(default_factory=ReferenceParams)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def replace(self, **sections) -> "ExperimentConfig":
        """Override individual keys: ``cfg.replace(sac={"hidden": 64})``."""
        updates = {}
        for name, values in sections.items():
            current = getattr(self, name)
            if name == "system" and ("mu" in values or "R" in values) and "n" not in values:
                values = {**values, "n": None}
            updates[name] = dataclasses.replace(current, **values)
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_ini(self) -> str:
        lines = []
        for name, values in self.to_dict().items():
            lines.append(f"[{name}]")
            for key, value in values.items():
                if value is None:
                    continue
                lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def _coerce(cls, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise KeyError(f"unknown key '{key}' for section {cls.__name__}")
    default = fields[key].default
    text = raw.strip()
    if text.lower() == "none" and default is None:
        return None
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(float(text))
    if isinstance(default, float) or default is None:
        return float(text)
    return text


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    sections = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            raise KeyError(f"unknown config section [{name}]")
        cls = _SECTIONS[name]
        sections[name] = cls(**{k: _coerce(cls, k, v) for k, v in parser.items(name)})
    return ExperimentConfig(**sections)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))
