"""Static checks of a loss/initialization setup against the NaN-avoidance guidelines.

Guideline ids:

* ``1``   sqrt loss in the late training phase
* ``2-1`` last-layer sigma_w outside [0.1, 0.6] without an epsilon
* ``2-2`` epsilon choice; sigma_w outside [0.1, 1] once an epsilon is added
* ``3``   var-style loss with the Bessel-corrected estimator
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

from ..headnet import InitScheme
from ..losskit import LossConfig

__all__ = ["AuditFinding", "audit_config", "GUIDELINES"]

GUIDELINES = ("1", "2-1", "2-2", "3")
RECOMMENDED_EPS = 1e-24
STABLE_RANGE_NO_EPS = (0.1, 0.6)
STABLE_RANGE_EPS = (0.1, 1.0)
# above this, epsilon visibly shrinks the gradient scale
LARGE_EPS = 1e-12


@dataclass(frozen=True)
class AuditFinding:
    guideline: str
    severity: Literal["warn", "fail"]
    message: str

    def __post_init__(self):
        if self.guideline not in GUIDELINES:
            raise ValueError(f"unknown guideline {self.guideline!r}")
        if self.severity not in ("warn", "fail"):
            raise ValueError(f"unknown severity {self.severity!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def audit_config(
    loss: LossConfig,
    init: InitScheme,
    phase: Literal["early", "late"] = "late",
    n_in: int = 128,
    k: int = 3,
) -> list[AuditFinding]:
    findings = []
    if loss.sqrt_wrap and phase == "late":
        findings.append(AuditFinding(
            "1", "warn",
            "sqrt(D) has an exploding gradient near D = 0; switch to plain D for late-phase training",
        ))

    sigma = init.sigma(n_in=n_in, n_out=1, k_h=k, k_w=k)
    eps = float(loss.epsilon)
    if eps == 0.0:
        lo, hi = STABLE_RANGE_NO_EPS
        if not lo <= sigma <= hi:
            findings.append(AuditFinding(
                "2-1", "fail" if sigma > hi else "warn",
                f"sigma_w = {sigma:.4g} ({init.kind}) is outside the stable range [{lo}, {hi}] for epsilon = 0",
            ))
        findings.append(AuditFinding(
            "2-2", "warn",
            f"epsilon is 0 in binary32: log(M * sigmoid(z)) is -inf once z <= -89; use epsilon = {RECOMMENDED_EPS:g}",
        ))
    else:
        lo, hi = STABLE_RANGE_EPS
        if not lo <= sigma <= hi:
            findings.append(AuditFinding(
                "2-2", "warn",
                f"sigma_w = {sigma:.4g} ({init.kind}) is outside [{lo}, {hi}] recommended with epsilon = {RECOMMENDED_EPS:g}",
            ))
        if eps > LARGE_EPS:
            findings.append(AuditFinding(
                "2-2", "warn",
                f"epsilon = {eps:g} shrinks the gradient scale; prefer {RECOMMENDED_EPS:g}",
            ))

    if loss.style == "var" and loss.estimator == "unbiased":
        findings.append(AuditFinding(
            "3", "fail",
            "var-style loss with the unbiased (n - 1) variance is wrong for small n and NaN at n = 1; "
            "use the biased estimator or the mean-style form, and skip batches with n = 0",
        ))
    return findings
