"""Burnt-area mapping from bitemporal Sentinel-2 patches."""

from ._core import (
    ConfigError,
    DataError,
    DivergenceError,
    Error,
    Sample,
    bamcd_parameter_count,
    class_metrics,
    compute_change,
    compute_index,
    compute_metrics,
    evaluate_threshold,
    fit_threshold,
    index_names,
    run,
    synthetic_dataset,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "Error",
    "Sample",
    "bamcd_parameter_count",
    "class_metrics",
    "compute_change",
    "compute_index",
    "compute_metrics",
    "evaluate_threshold",
    "fit_threshold",
    "index_names",
    "run",
    "synthetic_dataset",
]
