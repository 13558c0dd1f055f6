"""Numerical-stability lab for the scale-invariant log loss and sigmoid depth heads."""

__version__ = "0.1.0"

from . import fp32lab, headnet, losskit, optimkit, simgen  # noqa: E402
from .fp32lab import finfo, log32_shifted, parse_decimal_to_f32, sigmoid32  # noqa: E402
from .losskit import (  # noqa: E402
    EmptyInputError,
    LogDiffs,
    LossConfig,
    estimator_gap,
    eval_metrics,
    grad_silog,
    log_diff,
    silog,
    variance,
)

__all__ = [
    "fp32lab",
    "headnet",
    "losskit",
    "optimkit",
    "simgen",
    "finfo",
    "log32_shifted",
    "parse_decimal_to_f32",
    "sigmoid32",
    "EmptyInputError",
    "LogDiffs",
    "LossConfig",
    "estimator_gap",
    "eval_metrics",
    "grad_silog",
    "log_diff",
    "silog",
    "variance",
]
