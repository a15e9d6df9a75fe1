"""Closed-form kernel ridge estimate of the dose-response curve.

The fitted function is

    theta(t) = n^{-1/2} * sum_j [beta_j K(t, a_j) + gamma_j K(t, b_j)]

with ``beta = -u / (lam sqrt(n))`` and ``gamma`` solving
``(K22 + lam I) gamma = -(v / sqrt(n) + K21 beta)``, where the Gram blocks are
scaled by ``1/n``. This is the exact minimiser of

    mean(theta(b)^2 + 2 v theta(b) + 2 u theta(a)) + lam ||theta||_H^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import DataError, NumericError
from .kernels import GramBlocks, KernelSpec, _as_points
from .loss import PseudoResiduals


@dataclass(frozen=True, eq=False)
class FittedCDRF:
    beta: np.ndarray
    gamma: np.ndarray
    a_anchors: np.ndarray
    b_anchors: np.ndarray
    kernel: KernelSpec
    lam: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        a = _as_points(self.a_anchors)
        b = _as_points(self.b_anchors)
        if not (beta.size == gamma.size == a.shape[0] == b.shape[0]):
            raise DataError("coefficient and anchor lengths differ")
        if not self.lam > 0:
            raise DataError("lambda must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "a_anchors", a)
        object.__setattr__(self, "b_anchors", b)

    @property
    def n(self) -> int:
        return self.beta.size

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.n)

    def predict(self, t) -> np.ndarray:
        pts = _as_points(t)
        if pts.shape[1] != self.a_anchors.shape[1]:
            raise DataError("query dimension does not match anchors")
        ka = self.kernel.matrix(pts, self.a_anchors)
        kb = self.kernel.matrix(pts, self.b_anchors)
        return (ka @ self.beta + kb @ self.gamma) * self.scale

    __call__ = predict

    def rkhs_norm(self, gram_blocks: GramBlocks | None = None) -> float:
        """``sqrt(c^T K c)`` for the stacked coefficients and the scaled Gram."""
        K = (gram_blocks or self.gram()).assemble()
        c = np.concatenate([self.beta, self.gamma])
        return float(np.sqrt(max(c @ K @ c, 0.0)))

    def gram(self) -> GramBlocks:
        from .kernels import gram

        return gram(self.kernel, self.a_anchors, self.b_anchors)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.family,
            "bandwidth": self.kernel.bandwidth,
            "lambda": self.lam,
            "n2": self.n,
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "a_anchors": self.a_anchors[:, 0].tolist() if self.a_anchors.shape[1] == 1 else self.a_anchors.tolist(),
            "b_anchors": self.b_anchors[:, 0].tolist() if self.b_anchors.shape[1] == 1 else self.b_anchors.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> FittedCDRF:
        try:
            kernel = KernelSpec(doc["kernel"], float(doc["bandwidth"]))
            model = cls(doc["beta"], doc["gamma"], doc["a_anchors"], doc["b_anchors"], kernel, float(doc["lambda"]))
        except KeyError as exc:
            raise DataError(f"model document missing key {exc}") from None
        if "n2" in doc and int(doc["n2"]) != model.n:
            raise DataError("model document n2 does not match coefficient length")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> FittedCDRF:
        doc = json.loads(Path(path).read_text())
        return cls.from_dict(doc.get("model", doc))


def fit_closed_form(
    residuals: PseudoResiduals,
    gram_blocks: GramBlocks,
    lam: float,
    a_points,
    b_points,
    kernel: KernelSpec,
) -> FittedCDRF:
    if not lam > 0:
        raise DataError("lambda must be positive")
    u = np.asarray(residuals.u, dtype=float)
    v = np.asarray(residuals.v, dtype=float)
    n = gram_blocks.n
    if u.size != n or v.size != n:
        raise DataError("residual length does not match the Gram blocks")
    root_n = np.sqrt(n)
    beta = -u / (lam * root_n)
    rhs = -(v / root_n + gram_blocks.k21 @ beta)
    try:
        factor = linalg.cho_factor(gram_blocks.k22 + lam * np.eye(n), lower=True, check_finite=False)
        gamma = linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericError("Cholesky factorisation of K22 + lambda I failed") from exc
    if not np.all(np.isfinite(gamma)):
        raise NumericError("non-finite closed-form coefficients")
    return FittedCDRF(beta, gamma, a_points, b_points, kernel, lam)


def stationarity_inner(model: FittedCDRF, residuals: PseudoResiduals, gram_blocks: GramBlocks) -> np.ndarray:
    root_n = np.sqrt(model.n)
    top = residuals.u / root_n + model.lam * model.beta
    bottom = gram_blocks.k21 @ model.beta + gram_blocks.k22 @ model.gamma + residuals.v / root_n + model.lam * model.gamma
    return np.concatenate([top, bottom])


def stationarity_residual(model: FittedCDRF, residuals: PseudoResiduals, gram_blocks: GramBlocks) -> float:
    """Max-norm of the objective's gradient ``2 K (inner)`` at the fitted
    coefficients; zero at an exact minimiser."""
    grad = 2.0 * gram_blocks.assemble() @ stationarity_inner(model, residuals, gram_blocks)
    return float(np.max(np.abs(grad)))


def objective(beta, gamma, residuals: PseudoResiduals, gram_blocks: GramBlocks, lam: float) -> float:
    """Penalised empirical objective as a function of the dual coefficients."""
    n = gram_blocks.n
    root_n = np.sqrt(n)
    theta_b = root_n * (gram_blocks.k21 @ beta + gram_blocks.k22 @ gamma)
    theta_a = root_n * (gram_blocks.k11 @ beta + gram_blocks.k12 @ gamma)
    c = np.concatenate([beta, gamma])
    data = np.mean(theta_b**2 + 2 * residuals.v * theta_b + 2 * residuals.u * theta_a)
    return float(data + lam * c @ gram_blocks.assemble() @ c)
