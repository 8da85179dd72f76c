"""Experiment configuration, orchestration and reporting."""

from .config import ConfigError, ExperimentConfig, Run, load_config, parse_config
from .experiment import ComboResult, ReportRow, build_samples, run_all, run_combo

__all__ = ["ConfigError", "ExperimentConfig", "Run", "load_config", "parse_config",
           "ComboResult", "ReportRow", "build_samples", "run_all", "run_combo"]
