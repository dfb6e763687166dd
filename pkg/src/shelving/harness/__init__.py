"""Experiment orchestration: configuration, sweeps, named scenarios and the CLI."""
from .config import ConfigError, ExperimentConfig
from .scenarios import SCENARIOS, run_scenario
from .sweep import SweepResult, SweepRow, sweep_detection_time

__all__ = ["ConfigError", "ExperimentConfig", "SCENARIOS", "run_scenario", "SweepResult", "SweepRow",
           "sweep_detection_time"]
