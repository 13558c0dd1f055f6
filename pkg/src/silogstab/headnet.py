"""Sigmoid depth head: last convolution, max-depth scaling and its backward pass.

Shapes
------
feature map ``x``: ``(batch, n_h, n_w, n_in)`` or ``(n_h, n_w, n_in)``
kernel ``W``:      ``(k_h, k_w, n_in, 1)``
logits / depth:    ``(batch, n_h, n_w)`` or ``(n_h, n_w)``

The convolution is a stride-1 cross-correlation. ``padding="same"``
(default) zero-pads so the logit map keeps the input's spatial size;
``padding="valid"`` uses interior positions only. Each kernel tap's
channel contraction is computed first; taps are then accumulated in
row-major order, so the binary32 summation order is fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .fp32lab import sigmoid32
from .losskit import LogDiffs, LossConfig, grad_silog, log_diff, silog

__all__ = [
    "SigmoidHead",
    "InitScheme",
    "xavier_sigma",
    "he_sigma",
    "init_weights",
    "conv_forward",
    "conv_backward",
    "head_forward",
    "head_backward",
    "grad_loss_wrt_logits",
    "HeadLossResult",
    "loss_and_grads",
]


@dataclass
class SigmoidHead:
    W: np.ndarray
    b: np.float32 = np.float32(0.0)
    M: float = 80.0
    padding: Literal["same", "valid"] = "same"

    def __post_init__(self):
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        self.W = np.asarray(self.W, dtype=np.float32)
        if self.W.ndim == 3:
            self.W = self.W[..., None]
        if self.W.ndim != 4 or self.W.shape[3] != 1:
            raise ValueError(f"kernel must be (k_h, k_w, n_in, 1), got {self.W.shape}")
        if min(self.W.shape) < 1:
            raise ValueError("kernel dimensions must all be >= 1")
        if not self.M > 0:
            raise ValueError(f"max depth M must be > 0, got {self.M}")
        self.b = np.float32(self.b)

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.W.shape[0], self.W.shape[1]

    @property
    def n_in(self) -> int:
        return self.W.shape[2]

    def copy(self) -> "SigmoidHead":
        return SigmoidHead(self.W.copy(), np.float32(self.b), self.M, self.padding)

    def output_shape(self, n_h: int, n_w: int) -> tuple[int, int]:
        if self.padding == "same":
            return n_h, n_w
        k_h, k_w = self.kernel_size
        return n_h - k_h + 1, n_w - k_w + 1


def xavier_sigma(n_in: int, n_out: int = 1, k_h: int = 3, k_w: int = 3) -> float:
    return math.sqrt(2.0 / (k_h * k_w * (n_in + n_out)))


def he_sigma(n_in: int, n_out: int = 1, k_h: int = 3, k_w: int = 3) -> float:
    # fan-out variant, as used for the last layer of a depth head
    return math.sqrt(2.0 / (k_h * k_w * n_out))


@dataclass(frozen=True)
class InitScheme:
    kind: Literal["normal", "xavier", "he", "zero"] = "normal"
    sigma_w: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("normal", "xavier", "he", "zero"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "normal":
            if self.sigma_w is None or not self.sigma_w >= 0:
                raise ValueError("normal init needs sigma_w >= 0")

    def sigma(self, n_in: int = 128, n_out: int = 1, k_h: int = 3, k_w: int = 3) -> float:
        if self.kind == "normal":
            return float(self.sigma_w)
        if self.kind == "xavier":
            return xavier_sigma(n_in, n_out, k_h, k_w)
        if self.kind == "he":
            return he_sigma(n_in, n_out, k_h, k_w)
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma_w": self.sigma_w}

    @classmethod
    def from_dict(cls, d: dict) -> "InitScheme":
        return cls(kind=d.get("kind", "normal"), sigma_w=d.get("sigma_w"))


def init_weights(
    scheme: InitScheme,
    n_in: int = 128,
    k_h: int = 3,
    k_w: int = 3,
    rng: Optional[np.random.Generator] = None,
    M: float = 80.0,
    padding: str = "same",
) -> SigmoidHead:
    """Draw ``W ~ N(0, sigma^2)`` i.i.d. for the scheme's sigma; bias is zero."""
    if rng is None:
        rng = np.random.default_rng()
    sigma = scheme.sigma(n_in=n_in, n_out=1, k_h=k_h, k_w=k_w)
    W = sigma * rng.standard_normal((k_h, k_w, n_in, 1))
    return SigmoidHead(W.astype(np.float32), np.float32(0.0), M, padding)


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ValueError(f"feature map must be (n_h, n_w, n_in) or batched, got {x.shape}")
    return x, False


def _offsets(head: SigmoidHead):
    """Input-space offset of each kernel tap, row-major."""
    k_h, k_w = head.kernel_size
    ph, pw = ((k_h - 1) // 2, (k_w - 1) // 2) if head.padding == "same" else (0, 0)
    return [(a - ph, c - pw) for a in range(k_h) for c in range(k_w)]


def _window(n_in_len, n_out_len, off):
    """Output range [lo, hi) whose input index ``i + off`` is in bounds."""
    lo = max(0, -off)
    hi = min(n_out_len, n_in_len - off)
    return lo, max(lo, hi)


def conv_forward(head: SigmoidHead, x) -> np.ndarray:
    x, squeeze = _as_batch(np.asarray(x, dtype=np.float32))
    if x.shape[-1] != head.n_in:
        raise ValueError(f"feature map has {x.shape[-1]} channels, kernel expects {head.n_in}")
    B, n_h, n_w, n_in = x.shape
    H, Wd = head.output_shape(n_h, n_w)
    if H < 1 or Wd < 1:
        raise ValueError(f"feature map {(n_h, n_w)} smaller than kernel {head.kernel_size}")
    k_h, k_w = head.kernel_size
    # channel contraction for every tap at once: (pixels, n_in) @ (n_in, taps)
    taps = x.reshape(-1, n_in) @ head.W[..., 0].reshape(k_h * k_w, n_in).T
    taps = taps.reshape(B, n_h, n_w, k_h * k_w)
    z = np.zeros((B, H, Wd), dtype=np.float32)
    for t, (di, dj) in enumerate(_offsets(head)):
        i0, i1 = _window(n_h, H, di)
        j0, j1 = _window(n_w, Wd, dj)
        z[:, i0:i1, j0:j1] += taps[:, i0 + di : i1 + di, j0 + dj : j1 + dj, t]
    z += head.b
    return z[0] if squeeze else z


def conv_backward(head: SigmoidHead, x, grad_z) -> tuple[np.ndarray, np.float32]:
    """Weight and bias gradients of a scalar loss given ``d loss / d z``."""
    x, squeeze = _as_batch(np.asarray(x, dtype=np.float32))
    grad_z = np.asarray(grad_z, dtype=np.float32)
    if squeeze:
        grad_z = grad_z[None]
    B, n_h, n_w, n_in = x.shape
    H, Wd = head.output_shape(n_h, n_w)
    if grad_z.shape != (B, H, Wd):
        raise ValueError(f"grad shape {grad_z.shape} does not match logits {(B, H, Wd)}")
    k_h, k_w = head.kernel_size
    # scatter grad_z back to the input pixel each tap reads from
    shifted = np.zeros((B, n_h, n_w, k_h * k_w), dtype=np.float32)
    for t, (di, dj) in enumerate(_offsets(head)):
        i0, i1 = _window(n_h, H, di)
        j0, j1 = _window(n_w, Wd, dj)
        shifted[:, i0 + di : i1 + di, j0 + dj : j1 + dj, t] = grad_z[:, i0:i1, j0:j1]
    gW = (shifted.reshape(-1, k_h * k_w).T @ x.reshape(-1, n_in)).reshape(k_h, k_w, n_in, 1)
    gb = np.float32(np.sum(grad_z, dtype=np.float32))
    return gW.astype(np.float32), gb


def head_forward(head: SigmoidHead, x) -> np.ndarray:
    """Depth map ``M * sigmoid(z)``, always within [0, M]."""
    return np.float32(head.M) * sigmoid32(conv_forward(head, x))


def _sigmoid_slope(z, M):
    s = sigmoid32(z)
    return np.float32(M) * s * (np.float32(1.0) - s)


def head_backward(head: SigmoidHead, x, grad_y) -> tuple[np.ndarray, np.float32]:
    """Backpropagate ``d loss / d y`` through the sigmoid and the convolution."""
    z = conv_forward(head, x)
    grad_y = np.asarray(grad_y, dtype=np.float32)
    if grad_y.shape != z.shape:
        raise ValueError(f"grad shape {grad_y.shape} does not match depth map {z.shape}")
    return conv_backward(head, x, grad_y * _sigmoid_slope(z, head.M))


def grad_loss_wrt_logits(z, y, gt, mask, cfg: LossConfig, M: float) -> tuple[np.ndarray, "LogDiffs"]:
    """``d loss / d z`` for the head's loss; invalid pixels get zero gradient.

    ``d d_i / d z_i = M s(z_i) (1 - s(z_i)) / (y_i + eps)``. With ``y_i == 0``
    and ``eps == 0`` this is ``0 / 0``; the resulting NaN is left in place.
    """
    z = np.asarray(z, dtype=np.float32)
    y = np.asarray(y, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    d = log_diff(y, gt, mask, cfg.epsilon)
    g_d = grad_silog(d, cfg)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        dd_dz = _sigmoid_slope(z[mask], M) / (y[mask] + cfg.epsilon)
        out = np.zeros(z.shape, dtype=np.float32)
        out[mask] = g_d * dd_dz
    return out, d


@dataclass
class HeadLossResult:
    loss: np.float32
    grad_W: np.ndarray
    grad_b: np.float32
    grad_z: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    n: int = 0


def loss_and_grads(head: SigmoidHead, x, gt, mask, cfg: LossConfig) -> HeadLossResult:
    """One forward and backward pass of the full head pipeline, in binary32."""
    z = conv_forward(head, x)
    y = np.float32(head.M) * sigmoid32(z)
    grad_z, d = grad_loss_wrt_logits(z, y, gt, mask, cfg, head.M)
    loss = silog(d, cfg).value
    with np.errstate(invalid="ignore", over="ignore"):
        gW, gb = conv_backward(head, x, grad_z)
    return HeadLossResult(loss=loss, grad_W=gW, grad_b=gb, grad_z=grad_z, y=y, n=d.n)
