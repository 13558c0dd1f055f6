"""NaN/inf detection over the tensors of one training iteration."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

__all__ = ["NanEvent", "first_nonfinite", "scan"]

# order in which tensors are produced by one forward/backward pass
PIPELINE_ORDER = ("loss", "grad_z", "grad_W", "grad_b")


@dataclass(frozen=True)
class NanEvent:
    iteration: int
    tensor: str
    index: int
    kind: str  # "nan", "+inf" or "-inf"

    def to_dict(self) -> dict:
        return asdict(self)


def first_nonfinite(arr) -> Optional[tuple[int, str]]:
    """Flat index and kind of the first non-finite entry, or None."""
    a = np.asarray(arr).ravel()
    bad = np.flatnonzero(~np.isfinite(a))
    if bad.size == 0:
        return None
    i = int(bad[0])
    v = a[i]
    kind = "nan" if np.isnan(v) else ("+inf" if v > 0 else "-inf")
    return i, kind


def scan(iteration: int, tensors: dict, order: Iterable[str] = PIPELINE_ORDER) -> Optional[NanEvent]:
    """Return an event for the earliest tensor (in pipeline order) holding a NaN/inf."""
    for name in order:
        if name not in tensors:
            continue
        hit = first_nonfinite(tensors[name])
        if hit is not None:
            return NanEvent(iteration, name, hit[0], hit[1])
    return None
