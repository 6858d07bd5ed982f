"""Affinity matrix estimation for matching markets."""

import json

from ._core import (
    AffinityError,
    BinError,
    ConfigError,
    DimensionMismatch,
    InvalidArgument,
    IoError,
    NonPositiveVariance,
    NotConverged,
    SingularCornerBlock,
    SingularFisher,
    ZeroVarianceColumn,
    __version__,
    fit,
    gaussian_slope,
    matching_surplus,
    rank_test,
    report_json,
    saliency,
    simulate_gaussian,
    simulate_gaussian_1d,
    solve_ipfp,
)


def report(input, x_cols, y_cols, **options):
    """Runs the full pipeline on a CSV file and returns the report as a dict."""
    config = {"input": str(input), "x_cols": list(x_cols), "y_cols": list(y_cols)}
    config.update(options)
    return json.loads(report_json(json.dumps(config)))


__all__ = [
    "AffinityError",
    "BinError",
    "ConfigError",
    "DimensionMismatch",
    "InvalidArgument",
    "IoError",
    "NonPositiveVariance",
    "NotConverged",
    "SingularCornerBlock",
    "SingularFisher",
    "ZeroVarianceColumn",
    "__version__",
    "fit",
    "gaussian_slope",
    "matching_surplus",
    "rank_test",
    "report",
    "report_json",
    "saliency",
    "simulate_gaussian",
    "simulate_gaussian_1d",
    "solve_ipfp",
]
