"""Multistatic ISAC UAV sensing: superposed MUSIC per BS and symbol-level lattice fusion."""

from .config import ExperimentConfig, desk_preset, load_config, paper_preset
from .estimators import BsPreprocessor, MultiBsFusion
from .exceptions import ConfigError, DegenerateGeometryError, DomainError
from .fusion import FusionResult, Lattice, LatticePolicy
from .geolocate import SingleBsFix, VelocitySolution
from .harness import RmseTable, TrialResult, run_sweep, run_trial
from .music import BsEstimate, NoiseSubspaceGram, PreprocessConfig
from .scene import ArrayGeometry, BsSite, RadialParams, Scenario, UavState, table1_scenario
from .waveform import ChannelMatrix, NoiseModel, WaveformConfig

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "BsEstimate", "BsPreprocessor", "BsSite", "ChannelMatrix", "ConfigError",
    "DegenerateGeometryError", "DomainError", "ExperimentConfig", "FusionResult", "Lattice",
    "LatticePolicy", "MultiBsFusion", "NoiseModel", "NoiseSubspaceGram", "PreprocessConfig",
    "RadialParams", "RmseTable", "Scenario", "SingleBsFix", "TrialResult", "UavState",
    "VelocitySolution", "WaveformConfig", "desk_preset", "load_config", "paper_preset",
    "run_sweep", "run_trial", "table1_scenario",
]
