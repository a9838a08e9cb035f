"""Config-driven experiments: simulation, measurement, fitting and reports."""

from .config import ExperimentConfig, load_config, parse_config
from .experiment import (
    ExperimentResult,
    Verdict,
    build_target,
    compare_to_theory,
    replication_seed,
    run_experiment,
)
from .report import emit_report, read_csv, render_svg

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "Verdict",
    "build_target",
    "compare_to_theory",
    "emit_report",
    "load_config",
    "parse_config",
    "read_csv",
    "render_svg",
    "replication_seed",
    "run_experiment",
]
