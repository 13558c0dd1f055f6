"""Finite-difference verification of the head's analytic gradients.

The reference pipeline below is a separate binary64 implementation
(explicit loops, ``math`` functions, ``math.fsum`` reductions); it shares
no code with :mod:`silogstab.headnet` or :mod:`silogstab.losskit`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import headnet, simgen
from ..losskit import LossConfig

__all__ = ["reference_loss", "fd_gradient", "relative_error", "GradCheckResult", "run_gradient_check"]


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def reference_loss(W, b, x, gt, mask, cfg: LossConfig, M: float, padding: str = "same") -> float:
    """Head loss evaluated entirely in binary64 (``x`` is ``(batch, n_h, n_w, n_in)``)."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    k_h, k_w = W.shape[:2]
    B, n_h, n_w, _ = x.shape
    ph, pw = ((k_h - 1) // 2, (k_w - 1) // 2) if padding == "same" else (0, 0)
    out_h, out_w = (n_h, n_w) if padding == "same" else (n_h - k_h + 1, n_w - k_w + 1)
    eps = float(cfg.epsilon)
    d = []
    for n in range(B):
        for i in range(out_h):
            for j in range(out_w):
                if not mask[n, i, j]:
                    continue
                terms = [float(b)]
                for a in range(k_h):
                    for c in range(k_w):
                        p, q = i + a - ph, j + c - pw
                        if 0 <= p < n_h and 0 <= q < n_w:
                            terms.extend((W[a, c, :, 0] * x[n, p, q, :]).tolist())
                y = M * _sigmoid(math.fsum(terms))
                d.append(math.log(y + eps) - math.log(float(gt[n, i, j]) + eps))
    cnt = len(d)
    mean = math.fsum(d) / cnt
    if cfg.style == "mean":
        D = math.fsum(v * v for v in d) / cnt - cfg.lam * mean * mean
    else:
        denom = cnt if cfg.estimator == "biased" else cnt - 1
        D = math.fsum((v - mean) ** 2 for v in d) / denom + (1 - cfg.lam) * mean * mean
    return math.sqrt(D) if cfg.sqrt_wrap else D


def fd_gradient(f, w: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` at every entry of ``w`` (binary64)."""
    w = np.array(w, dtype=np.float64)
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        orig = w[idx]
        w[idx] = orig + h
        fp = f(w)
        w[idx] = orig - h
        fm = f(w)
        w[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic, reference) -> float:
    """Max-norm relative error ``|a - r|_inf / |r|_inf``."""
    a = np.asarray(analytic, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    scale = np.max(np.abs(r))
    if scale == 0:
        return float(np.max(np.abs(a)))
    return float(np.max(np.abs(a - r)) / scale)


@dataclass
class GradCheckResult:
    trials: int
    seed: int
    tolerance: float
    errors: list = field(default_factory=list)
    configs: list = field(default_factory=list, repr=False)

    @property
    def worst(self) -> float:
        return max(self.errors)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "worst_relative_error": self.worst,
            "passed": self.passed,
            "errors": self.errors,
        }


def _random_case(rng: np.random.Generator):
    style = str(rng.choice(["mean", "var"]))
    cfg = LossConfig(
        lam=float(rng.uniform(0.0, 0.95)),
        style=style,
        estimator=str(rng.choice(["biased", "unbiased"])) if style == "var" else "biased",
        sqrt_wrap=bool(rng.integers(2)),
        epsilon=np.float32(1e-6),
    )
    batch = int(rng.integers(1, 3))
    sigma = float(rng.uniform(0.1, 0.5))
    head = headnet.init_weights(headnet.InitScheme("normal", sigma), n_in=4, k_h=3, k_w=3, rng=rng, M=80.0)
    head.b = np.float32(rng.normal(0, 0.5))
    x = simgen.gen_features((batch, 3, 3, 4), rng)
    gt = rng.uniform(5.0, 60.0, size=(batch, 3, 3)).astype(np.float32)
    mask = np.ones(gt.shape, dtype=bool)
    return head, x, gt, mask, cfg


def run_gradient_check(trials: int = 50, seed: int = 0, tolerance: float = 1e-4, max_attempts: int = 20) -> GradCheckResult:
    """Compare analytic ``dL/dW`` with binary64 central differences on random small heads.

    Cases whose reference loss ``D`` is below 1e-3 are redrawn, keeping the
    comparison away from the sqrt singularity at ``D == 0``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    result = GradCheckResult(trials=trials, seed=seed, tolerance=tolerance)
    for t in range(trials):
        rng = simgen.RngStream(seed, t).generator()
        for _ in range(max_attempts):
            head, x, gt, mask, cfg = _random_case(rng)
            plain = LossConfig(cfg.lam, cfg.style, cfg.estimator, False, cfg.epsilon)
            if reference_loss(head.W, head.b, x, gt, mask, plain, head.M) > 1e-3:
                break
        analytic = headnet.loss_and_grads(head, x, gt, mask, cfg).grad_W
        fd = fd_gradient(lambda w: reference_loss(w, head.b, x, gt, mask, cfg, head.M), head.W)
        result.errors.append(relative_error(analytic, fd))
        result.configs.append(cfg.to_dict())
    return result
