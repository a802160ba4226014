"""Egocentric target search by correlating ego-motion with local motion."""

import json

from ._egocorr import (
    Analysis,
    Config,
    ConfigError,
    DataError,
    Error,
    __version__,
    affinity_propagation,
    analyze,
    build_map,
    clustering_metrics,
    median_filter,
    paa,
    pixel_auc,
    score,
    upper_bound,
    zncc,
)
from . import _egocorr


def synthesize(spec, out_dir, config=None):
    """Write a synthetic session; `spec` is a dict of spec fields (missing keys keep defaults)."""
    _egocorr.synthesize(json.dumps(spec), str(out_dir), config or Config())


def benchmark(session_dir, variant="C", config=None, jobs=1, prior=None):
    """Evaluate one variant on a session directory and return the report as a dict."""
    return json.loads(_egocorr.benchmark(str(session_dir), variant, config or Config(), jobs, prior))


__all__ = [
    "Analysis",
    "Config",
    "ConfigError",
    "DataError",
    "Error",
    "__version__",
    "affinity_propagation",
    "analyze",
    "benchmark",
    "build_map",
    "clustering_metrics",
    "median_filter",
    "paa",
    "pixel_auc",
    "score",
    "synthesize",
    "upper_bound",
    "zncc",
]
