"""Adam and step-decay learning rates for the training simulations.

Optimizer state is kept in binary32 like the parameters it updates;
double-precision moments would hide the instabilities being studied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

__all__ = ["AdamState", "adam_step", "LrSchedule", "lr_at"]


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    lr: float = 1e-3

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update. Returns new parameter arrays.

    NaN gradients are not filtered: they propagate into the parameters,
    so callers that care must check before stepping.
    """
    if params.keys() != grads.keys():
        raise ValueError(f"params {sorted(params)} and grads {sorted(grads)} differ")
    state.t += 1
    f32 = np.float32
    b1, b2 = f32(state.beta1), f32(state.beta2)
    bc1 = f32(1.0 - state.beta1**state.t)
    bc2 = f32(1.0 - state.beta2**state.t)
    lr, eps = f32(state.lr), f32(state.eps_opt)

    out = {}
    with np.errstate(invalid="ignore", over="ignore"):
        for k, p in params.items():
            p = np.asarray(p, dtype=np.float32)
            g = np.asarray(grads[k], dtype=np.float32)
            if g.shape != p.shape:
                raise ValueError(f"gradient for {k!r} has shape {g.shape}, expected {p.shape}")
            m = state.m.get(k)
            if m is None:
                m = np.zeros_like(p)
                state.v[k] = np.zeros_like(p)
            elif m.shape != p.shape:
                raise ValueError(f"moment for {k!r} has shape {m.shape}, expected {p.shape}")
            m = b1 * m + (f32(1) - b1) * g
            v = b2 * state.v[k] + (f32(1) - b2) * (g * g)
            state.m[k], state.v[k] = m, v
            m_hat = m / bc1
            v_hat = v / bc2
            new = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            out[k] = new.astype(np.float32) if new.ndim else f32(new)
    return out


@dataclass(frozen=True)
class LrSchedule:
    kind: Literal["constant", "step"] = "constant"
    lr: float = 1e-3
    factor: float = 1.0
    every: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "step"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.kind == "step":
            if not 0.0 < self.factor <= 1.0:
                raise ValueError("step factor must lie in (0, 1]")
            if self.every < 1:
                raise ValueError("step interval must be >= 1")

    @classmethod
    def constant(cls, lr: float) -> "LrSchedule":
        return cls("constant", lr)

    @classmethod
    def step(cls, lr: float = 1e-3, factor: float = 0.1, every: int = 100) -> "LrSchedule":
        return cls("step", lr, factor, every)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lr": self.lr, "factor": self.factor, "every": self.every}

    @classmethod
    def from_dict(cls, d: dict) -> "LrSchedule":
        return cls(**d)


def lr_at(schedule: LrSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("iteration must be >= 0")
    if schedule.kind == "constant":
        return schedule.lr
    return schedule.lr * schedule.factor ** math.floor(t / schedule.every)
