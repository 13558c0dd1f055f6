"""Scale-invariant log loss, its variants, gradients and depth metrics.

Two algebraically equivalent ways of writing the loss are supported:

* ``"mean"``: ``E[d^2] - lam * E[d]^2``
* ``"var"``:  ``Var[d] + (1 - lam) * E[d]^2``

They agree only when ``Var`` divides by ``n``. With the Bessel-corrected
estimator (``n - 1``) the var form is wrong for small ``n`` and NaN at
``n == 1``. An empty input (``n == 0``) raises :class:`EmptyInputError`
instead of returning a silent NaN.

Arithmetic runs in the dtype of ``LogDiffs.values``: binary32 on the
reproduction path (what :func:`log_diff` produces), binary64 when a
caller builds ``LogDiffs`` from float64 data for checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .fp32lab import log32_shifted, parse_decimal_to_f32

__all__ = [
    "EmptyInputError",
    "LogDiffs",
    "LossConfig",
    "LossOutput",
    "DepthMetrics",
    "log_diff",
    "variance",
    "silog",
    "grad_silog",
    "estimator_gap",
    "eval_metrics",
    "to_f32_epsilon",
]

Style = Literal["mean", "var"]
Estimator = Literal["biased", "unbiased"]

DEFAULT_LAMBDA = 0.85


class EmptyInputError(ValueError):
    """Raised when a loss or statistic is requested over zero valid pixels."""


def to_f32_epsilon(eps) -> np.float32:
    """Cast a user epsilon to binary32 the way a framework tensor would.

    Strings are parsed as exact decimals; Python floats are rounded from
    their binary64 value. Either way ``7.0e-46`` ends up as 0.
    """
    if isinstance(eps, str):
        return parse_decimal_to_f32(eps)
    return np.float32(eps)


@dataclass(frozen=True)
class LogDiffs:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype not in (np.float32, np.float64):
            v = v.astype(np.float32)
        object.__setattr__(self, "values", v.ravel())

    @property
    def n(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_array(cls, values, dtype=np.float32) -> "LogDiffs":
        return cls(np.asarray(values, dtype=dtype))


@dataclass(frozen=True)
class LossConfig:
    lam: float = DEFAULT_LAMBDA
    style: Style = "mean"
    estimator: Estimator = "biased"
    sqrt_wrap: bool = False
    epsilon: np.float32 = np.float32(0.0)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.style not in ("mean", "var"):
            raise ValueError(f"unknown style {self.style!r}")
        if self.estimator not in ("biased", "unbiased"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        eps = to_f32_epsilon(self.epsilon)
        if not eps >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "sqrt_wrap", bool(self.sqrt_wrap))

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "style": self.style,
            "estimator": self.estimator,
            "sqrt_wrap": self.sqrt_wrap,
            "epsilon": float(self.epsilon),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**{k: d[k] for k in ("lam", "style", "estimator", "sqrt_wrap", "epsilon") if k in d})


@dataclass(frozen=True)
class LossOutput:
    value: np.floating
    grad_d: Optional[np.ndarray] = None

    @property
    def is_nan(self) -> bool:
        return bool(np.isnan(self.value))

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite(self.value))


def log_diff(pred, gt, mask=None, epsilon=np.float32(0.0)) -> LogDiffs:
    """Per-pixel ``log(pred + eps) - log(gt + eps)`` over the masked pixels, in binary32."""
    pred = np.asarray(pred, dtype=np.float32)
    gt = np.asarray(gt, dtype=np.float32)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape {mask.shape} != pred shape {pred.shape}")
    eps = to_f32_epsilon(epsilon)
    with np.errstate(invalid="ignore"):
        d = log32_shifted(pred[mask], eps) - log32_shifted(gt[mask], eps)
    return LogDiffs(np.asarray(d, dtype=np.float32))


def _check_nonempty(d: LogDiffs, minimum: int = 1):
    if d.n < minimum:
        if d.n == 0:
            raise EmptyInputError("no valid pixels (n == 0)")
        raise ValueError(f"need n >= {minimum}, got n = {d.n}")


def variance(d: LogDiffs, estimator: Estimator = "biased"):
    """Sum of squared deviations over ``n`` (biased) or ``n - 1`` (unbiased)."""
    _check_nonempty(d)
    v = d.values
    dt = v.dtype.type
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        mu = v.mean(dtype=v.dtype)
        ss = np.sum((v - mu) ** 2, dtype=v.dtype)
        denom = dt(d.n) if estimator == "biased" else dt(d.n - 1)
        return dt(ss / denom)


def _loss_core(d: LogDiffs, cfg: LossConfig):
    v = d.values
    dt = v.dtype.type
    lam = dt(cfg.lam)
    with np.errstate(invalid="ignore", over="ignore"):
        mu = v.mean(dtype=v.dtype)
        if cfg.style == "mean":
            D = np.mean(v * v, dtype=v.dtype) - lam * mu * mu
        else:
            D = variance(d, cfg.estimator) + (dt(1) - lam) * mu * mu
    return dt(D), mu


def silog(d: LogDiffs, cfg: LossConfig, with_grad: bool = False) -> LossOutput:
    """Scale-invariant log loss ``D`` (or ``sqrt(D)`` when ``cfg.sqrt_wrap``).

    NaN and inf are propagated. A ``-inf`` entry turns the mean form into
    ``inf - lam * inf``, which is NaN for ``lam > 0``.
    """
    _check_nonempty(d)
    D, _ = _loss_core(d, cfg)
    if cfg.sqrt_wrap:
        with np.errstate(invalid="ignore"):
            value = np.sqrt(D)
    else:
        value = D
    grad = grad_silog(d, cfg) if with_grad else None
    return LossOutput(value=value, grad_d=grad)


def grad_silog(d: LogDiffs, cfg: LossConfig) -> np.ndarray:
    """Analytic ``d loss / d d_i``.

    mean form and biased var form: ``(2/n) d_i - (2 lam / n^2) sum d``.
    unbiased var form: ``2 (d_i - mean) / (n - 1) + 2 (1 - lam) mean / n``.
    The sqrt wrapper scales either by ``1 / (2 sqrt(D))``; at ``D == 0``
    that factor is inf and the product is reported as-is.
    """
    _check_nonempty(d)
    v = d.values
    dt = v.dtype.type
    n = dt(d.n)
    lam = dt(cfg.lam)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        mu = v.mean(dtype=v.dtype)
        if cfg.style == "var" and cfg.estimator == "unbiased":
            g = dt(2) * (v - mu) / (n - dt(1)) + dt(2) * (dt(1) - lam) * mu / n
        else:
            # sum(d)/n^2 written as mean/n so both styles share one expression
            g = (dt(2) / n) * v - (dt(2) * lam / n) * mu
        if cfg.sqrt_wrap:
            D, _ = _loss_core(d, cfg)
            g = g * (dt(1) / (dt(2) * np.sqrt(D)))
    return np.asarray(g, dtype=v.dtype)


def estimator_gap(d: LogDiffs, lam: float = DEFAULT_LAMBDA) -> float:
    """``D_var_unbiased - D_mean`` in binary64; equals ``Var_biased / (n - 1)`` exactly."""
    if d.n < 2:
        raise ValueError(f"estimator_gap needs n >= 2, got n = {d.n}")
    v = LogDiffs(np.asarray(d.values, dtype=np.float64))
    d_var, _ = _loss_core(v, LossConfig(lam=lam, style="var", estimator="unbiased"))
    d_mean, _ = _loss_core(v, LossConfig(lam=lam, style="mean"))
    return float(d_var - d_mean)


@dataclass(frozen=True)
class DepthMetrics:
    a1: float
    a2: float
    a3: float
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def eval_metrics(pred, gt, mask=None) -> DepthMetrics:
    """Standard monocular depth metrics over the masked pixels, in binary64.

    Thresholds use a strict ``delta < 1.25**k``, so a uniform 1.25x
    overestimate scores 0 on the first threshold.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        pred, gt = pred[mask], gt[mask]
    pred, gt = pred.ravel(), gt.ravel()
    if pred.size == 0:
        raise EmptyInputError("eval_metrics over an empty mask")

    delta = np.maximum(pred / gt, gt / pred)
    err = pred - gt
    return DepthMetrics(
        a1=float(np.mean(delta < 1.25)),
        a2=float(np.mean(delta < 1.25**2)),
        a3=float(np.mean(delta < 1.25**3)),
        abs_rel=float(np.mean(np.abs(err) / gt)),
        sq_rel=float(np.mean(err**2 / gt)),
        rmse=math.sqrt(np.mean(err**2)),
        rmse_log=math.sqrt(np.mean((np.log(pred) - np.log(gt)) ** 2)),
        log10=float(np.mean(np.abs(np.log10(pred) - np.log10(gt)))),
    )
