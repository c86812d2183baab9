"""Experiment orchestration: configs, runs, sweeps, reports, serving."""

from .config import ConfigError, ExperimentConfig, load_config
from .report import report_text, summarize, verify_run_dir
from .run import RunResult, pretrained_policy, run, shifted_suite
from .serve import RunController, make_server, serve
from .sweep import run_matched_sampling, sweep

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "report_text",
    "summarize",
    "verify_run_dir",
    "RunResult",
    "pretrained_policy",
    "run",
    "shifted_suite",
    "RunController",
    "make_server",
    "serve",
    "run_matched_sampling",
    "sweep",
]
