"""Seeded synthetic data for the head simulations.

Samples are drawn in binary64 and rounded to binary32 for storage.
Determinism is per build: the same ``(seed, stream)`` yields the same
tensors with this numpy's PCG64, nothing more is promised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DatasetStats",
    "DATASETS",
    "dataset_stats",
    "RngStream",
    "GENERATOR_ID",
    "SparseMask",
    "gen_ground_truth",
    "gen_features",
    "gen_sparse_mask",
]

GENERATOR_ID = "numpy.PCG64/SeedSequence"


@dataclass(frozen=True)
class DatasetStats:
    name: str
    mean: float
    std: float


# ground-truth depth statistics in meters
DATASETS: dict[str, DatasetStats] = {
    s.name: s
    for s in (
        DatasetStats("KITTI", 16.2307, 5.3810),
        DatasetStats("NYU-Depth V2", 2.8497, 1.2845),
        DatasetStats("Driving Stereo", 23.8313, 7.7740),
        DatasetStats("Argoverse", 26.1697, 1.9219),
        DatasetStats("DDAD", 31.4102, 3.2712),
    )
}


def dataset_stats(name: str) -> DatasetStats:
    try:
        return DATASETS[name]
    except KeyError:
        raise KeyError(f"unknown dataset {name!r}; known: {', '.join(DATASETS)}") from None


@dataclass(frozen=True)
class RngStream:
    """A ``(seed, stream)`` pair naming one independent random sequence."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SparseMask:
    grid: np.ndarray
    valid_rate: float

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.grid))


def gen_ground_truth(stats: DatasetStats, shape, rng: np.random.Generator):
    """Normal depth samples plus a mask that drops the non-positive ones."""
    depth = rng.normal(stats.mean, stats.std, size=shape)
    mask = depth > 0
    return depth.astype(np.float32), mask


def gen_features(shape, rng: np.random.Generator) -> np.ndarray:
    """``ReLU(B)`` with ``B ~ N(0, 1)``: stands in for a BatchNorm-ReLU output."""
    b = rng.standard_normal(size=shape)
    np.maximum(b, 0.0, out=b)
    return b.astype(np.float32)


def gen_sparse_mask(shape, valid_rate: float, rng: np.random.Generator) -> SparseMask:
    if not 0.0 <= valid_rate <= 1.0:
        raise ValueError(f"valid_rate must lie in [0, 1], got {valid_rate}")
    return SparseMask(rng.random(shape) < valid_rate, valid_rate)
