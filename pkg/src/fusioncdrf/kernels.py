"""Exposure kernels, the median-heuristic bandwidth, and scaled Gram blocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigError, DataError

LAPLACE = "laplace"
GAUSSIAN = "gaussian"


def _as_points(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    return arr


@dataclass(frozen=True)
class KernelSpec:
    family: str = LAPLACE
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in (LAPLACE, GAUSSIAN):
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigError("bandwidth must be finite and positive")

    @property
    def metric(self) -> str:
        return "cityblock" if self.family == LAPLACE else "euclidean"

    def _from_dist(self, dist: np.ndarray) -> np.ndarray:
        if self.family == LAPLACE:
            return np.exp(-dist / self.bandwidth)
        return np.exp(-(dist * dist) / (2.0 * self.bandwidth**2))

    def eval(self, a, t) -> float:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if a.shape != t.shape:
            raise DataError("kernel arguments have different dimensions")
        diff = a - t
        dist = np.abs(diff).sum() if self.family == LAPLACE else np.sqrt((diff * diff).sum())
        return float(self._from_dist(np.asarray(dist)))

    def matrix(self, p, q) -> np.ndarray:
        """Unscaled cross-kernel matrix ``K(p_i, q_j)``."""
        p, q = _as_points(p), _as_points(q)
        if p.shape[1] != q.shape[1]:
            raise DataError("kernel arguments have different dimensions")
        if p.shape[1] == 1:
            dist = np.abs(p - q.T)
        else:
            dist = cdist(p, q, metric=self.metric)
        return self._from_dist(dist)

    def to_dict(self) -> dict:
        return {"kernel": self.family, "bandwidth": self.bandwidth}


def _median(values: np.ndarray) -> float:
    # numpy's median averages the two central order statistics for even counts
    return float(np.median(values))


def median_heuristic(points, family: str = LAPLACE) -> float:
    """Median pairwise distance, using the kernel family's distance
    (L1 for Laplace, Euclidean for Gaussian)."""
    pts = _as_points(points)
    if pts.shape[0] < 2:
        raise DataError("median heuristic needs at least 2 points")
    metric = "cityblock" if family == LAPLACE else "euclidean"
    dists = pdist(pts, metric=metric)
    if not np.any(dists > 0):
        raise DataError("degenerate exposure set")
    return _median(dists)


class GramBlocks(NamedTuple):
    """The ``1/n`` scaled kernel matrix over stacked (a, b) anchors, by block."""

    k11: np.ndarray
    k12: np.ndarray
    k21: np.ndarray
    k22: np.ndarray

    @property
    def n(self) -> int:
        return self.k11.shape[0]

    @property
    def scale(self) -> float:
        return 1.0 / self.n

    def assemble(self) -> np.ndarray:
        return np.block([[self.k11, self.k12], [self.k21, self.k22]])


def gram(kernel: KernelSpec, a_points, b_points) -> GramBlocks:
    a = _as_points(a_points)
    b = _as_points(b_points)
    if a.shape != b.shape:
        raise DataError("observed and auxiliary exposures must have equal length")
    n = a.shape[0]
    if n < 1:
        raise DataError("gram needs at least one point")
    k11 = kernel.matrix(a, a) / n
    k22 = kernel.matrix(b, b) / n
    k21 = kernel.matrix(b, a) / n
    k12 = np.ascontiguousarray(k21.T)
    return GramBlocks(k11, k12, k21, k22)
