"""Experiment orchestration: configuration, sweep execution, CLI."""

from .config import ConfigError, DetectorSpec, ExperimentConfig, SweepGrid, load_config
from .experiment import SweepRecord, run_experiment, run_grid_point

__all__ = ["ConfigError", "DetectorSpec", "ExperimentConfig", "SweepGrid",
           "load_config", "SweepRecord", "run_experiment", "run_grid_point"]
