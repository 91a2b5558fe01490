"""Experiment harness: datasets, experiment runs, statistics, plot data."""

from .dataset import GenConfig, generate_dataset, load_manifest
from .experiment import ArmSpec, ExperimentConfig, load_config, read_report, run_experiment
from .plotdata import FIGURES, emit_plot_data
from .stats import bootstrap_ci, cohens_d, paired_t_test

__all__ = [
    "ArmSpec", "ExperimentConfig", "FIGURES", "GenConfig", "bootstrap_ci", "cohens_d", "emit_plot_data",
    "generate_dataset", "load_config", "load_manifest", "paired_t_test", "read_report", "run_experiment",
]
