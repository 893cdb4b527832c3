"""Experiment configuration, runners and the command-line interface."""

from .config import ExperimentConfig, load_config, parse_config_text
from .experiments import RUNNERS, Report, run_experiment, write_report
from .fits import ScalingFit, fit_scaling

__all__ = ["ExperimentConfig", "load_config", "parse_config_text", "Report", "RUNNERS", "run_experiment",
           "write_report", "ScalingFit", "fit_scaling"]
