"""Simulation design: data-generating process, true and misaligned dose-response
curves, and exact (oracle) nuisances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal

from .data import FUSED, NONFUSED, Dataset, FusionConfig, check_mode
from .errors import ConfigError
from .nuisance import NuisanceBounds, NuisanceFit
from .reference import ReferenceMeasure, beta_draws, beta_log_pdf

FAMILIES = ("gaussian", "trigonometric", "discontinuous")

MU_ALIGNED = np.full(3, 1.0 / 3.0)
SIGMA_ALIGNED = 0.09 * np.eye(3)
MU_SHIFTED = np.full(3, 1.0 / 6.0)
SIGMA_SHIFTED = np.full((3, 3), 0.1) + 0.15 * np.eye(3)
NOISE_SD = 0.1

# source label s = 2 * S_X + S_Y
SCENARIO_FUSION = FusionConfig(sources_x={2, 3}, sources_y={1, 3})


def _check_family(family: str) -> str:
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return family


def _check_exposure(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or not np.all(np.isfinite(arr)):
        raise ValueError("exposure outside [0, 1]")
    return arr


def _normal_pdf(a, mean, sd):
    z = (a - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * np.sqrt(2.0 * np.pi))


def _ret(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def true_cdrf(family: str, a):
    """The target dose-response curve of ``family``."""
    _check_family(family)
    a = _check_exposure(a)
    if family == "gaussian":
        out = _normal_pdf(a, 0.5, 0.25) - 1.0
    elif family == "trigonometric":
        out = 5.0 * np.sin(3.0 * a) + 3.0 * np.cos(10.0 * a)
    else:
        out = np.where(a < 0.5, np.sqrt(a) + 0.1, 0.5 * (a**4 + 1.0))
    return _ret(np.asarray(out, dtype=float))


def misspecified_cdrf(family: str, a):
    """The curve generating outcomes in sources not aligned on ``Y``."""
    _check_family(family)
    a = _check_exposure(a)
    if family == "gaussian":
        out = 0.5 * (_normal_pdf(a, 1.0, 0.25) - 1.0)
    elif family == "trigonometric":
        out = 0.5 * (np.cos(3.0 * a) + np.sin(10.0 * a))
    else:
        out = np.where(a < 0.3, np.sqrt(np.log1p(a)), 0.1 * (np.cos(3.0 * a) + 1.0))
    return _ret(np.asarray(out, dtype=float))


def exposure_shape(x: np.ndarray) -> np.ndarray:
    """Shared Beta shape parameter of ``A | X``."""
    return 1.0 + 1.0 / (1.0 + np.exp(np.asarray(x).sum(axis=-1)))


@dataclass(frozen=True)
class Scenario:
    family: str = "gaussian"

    def __post_init__(self):
        _check_family(self.family)

    @property
    def fusion(self) -> FusionConfig:
        return SCENARIO_FUSION

    def generate(self, n: int, seed: int) -> Dataset:
        return generate(self.family, n, seed)


def generate(family: str, n: int, seed: int) -> Dataset:
    _check_family(family)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    s_x = rng.random(n) < 0.5
    s_y = rng.random(n) < 0.5
    z = rng.standard_normal((n, 3))
    x_aligned = MU_ALIGNED + z @ np.linalg.cholesky(SIGMA_ALIGNED).T
    x_shifted = MU_SHIFTED + z @ np.linalg.cholesky(SIGMA_SHIFTED).T
    x = np.where(s_x[:, None], x_aligned, x_shifted)
    shape = exposure_shape(x)
    a = beta_draws(rng, shape, shape)
    row_sum = x.sum(axis=1)
    mean = np.where(s_y, true_cdrf(family, a), misspecified_cdrf(family, a)) * row_sum
    y = mean + NOISE_SD * rng.standard_normal(n)
    s = 2 * s_x.astype(np.int64) + s_y.astype(np.int64)
    return Dataset(x, a, y, s)


# -- oracle nuisances --------------------------------------------------------------


@dataclass(frozen=True)
class OracleRatio:
    """Exact ``d(Q_X x mu) / dP_{X,A | outcome-aligned}`` for the design."""

    mu: ReferenceMeasure
    covariate_shift: bool

    def predict(self, x, a) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = np.asarray(a, dtype=float).reshape(-1)
        shape = exposure_shape(x)
        a_c = np.clip(a, 1e-12, 1.0 - 1e-12)
        ratio = self.mu.density(a_c) / np.exp(beta_log_pdf(a_c, shape, shape))
        if self.covariate_shift:
            p0 = multivariate_normal(MU_ALIGNED, SIGMA_ALIGNED).pdf(x)
            p1 = multivariate_normal(MU_SHIFTED, SIGMA_SHIFTED).pdf(x)
            # S_X independent of S_Y: x | S_Y = 1 is the even mixture
            ratio = ratio * p0 / (0.5 * p0 + 0.5 * p1)
        return np.asarray(ratio, dtype=float).reshape(-1)


@dataclass(frozen=True)
class OracleOutcome:
    family: str

    def predict(self, x, a) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = np.asarray(a, dtype=float).reshape(-1)
        return true_cdrf(self.family, a) * x.sum(axis=1)


@dataclass(frozen=True)
class OracleTau:
    family: str
    mean_row_sum: float

    def predict(self, a) -> np.ndarray:
        return np.asarray(true_cdrf(self.family, np.asarray(a, dtype=float).reshape(-1))) * self.mean_row_sum


def oracle_nuisance(
    family: str,
    mu: ReferenceMeasure,
    mode: str = FUSED,
    mc_size: int = 100_000,
    seed: int = 0,
    bounds: NuisanceBounds | None = None,
) -> NuisanceFit:
    """Nuisances computed from the known design rather than estimated.

    The plug-in curve averages ``m0(X, a)`` over ``mc_size`` draws of the aligned
    covariate law, so it converges to the true curve as ``mc_size`` grows.
    """
    _check_family(family)
    check_mode(mode)
    rng = np.random.default_rng(seed)
    x = MU_ALIGNED + rng.standard_normal((mc_size, 3)) @ np.linalg.cholesky(SIGMA_ALIGNED).T
    tau = OracleTau(family, float(x.sum(axis=1).mean()))
    if mode == FUSED:
        xi = eta = 2.0
        ratio = OracleRatio(mu, covariate_shift=True)
    else:
        xi = eta = 4.0
        ratio = OracleRatio(mu, covariate_shift=False)
    return NuisanceFit(xi, eta, ratio, OracleOutcome(family), tau, mode, bounds or NuisanceBounds())


__all__ = [
    "FAMILIES",
    "NONFUSED",
    "SCENARIO_FUSION",
    "Scenario",
    "generate",
    "misspecified_cdrf",
    "oracle_nuisance",
    "true_cdrf",
]
