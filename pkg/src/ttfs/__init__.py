"""Simulation, PD baseline control and soft actor-critic compensation for
deploying a triangular tethered satellite formation."""
from .config import ExperimentConfig, load_config, parse_config
from .dynamics import (DisturbanceMode, DisturbanceSpec, SatelliteState, SystemParams, TetherState,
                       advance_coupled, advance_reel)
from .reference import ReferenceParams

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "load_config", "parse_config", "DisturbanceMode", "DisturbanceSpec",
           "SatelliteState", "SystemParams", "TetherState", "advance_coupled", "advance_reel",
           "ReferenceParams"]
