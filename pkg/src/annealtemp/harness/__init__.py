"""Experiment configuration, protocols and the command-line interface."""

from .config import ExperimentConfig, ReferenceConfig, SamplerConfig, SizeSpec, load_config, parse_postprocess
from .experiments import (
    PRESETS,
    aggregate_quartiles,
    compute_reference,
    run_estimator_scatter,
    run_full_pipeline,
    run_mse_beta_scan,
    run_rescaling_sweep,
)

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "ReferenceConfig",
    "SamplerConfig",
    "SizeSpec",
    "aggregate_quartiles",
    "compute_reference",
    "load_config",
    "parse_postprocess",
    "run_estimator_scatter",
    "run_full_pipeline",
    "run_mse_beta_scan",
    "run_rescaling_sweep",
]
