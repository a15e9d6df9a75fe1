"""K-fold selection of the ridge penalty for the closed-form estimator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import ExtendedData, FusionConfig, check_mode
from .errors import ConfigError, DataError
from .kernels import GramBlocks, KernelSpec, gram
from .krr import FittedCDRF, fit_closed_form
from .loss import PseudoResiduals, pseudo_residuals, quadratic_form_risk
from .nuisance import NuisanceFit

PAPER = "paper"
STANDARD = "standard"

# 0.0001, 0.0051, ..., 0.0301
DEFAULT_LAMBDA_GRID = tuple(round(0.0001 + 0.005 * k, 4) for k in range(7))

NuisanceFitter = Callable[[ExtendedData, int], NuisanceFit]


@dataclass(frozen=True)
class CVConfig:
    folds: int = 5
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID
    mode: str = STANDARD
    penalty_power: int = 1
    seed: int = 0

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        if not grid:
            raise ConfigError("lambda grid is empty")
        if any(not (v > 0 and np.isfinite(v)) for v in grid):
            raise ConfigError("lambda grid values must be positive")
        if list(grid) != sorted(grid):
            raise ConfigError("lambda grid must be sorted ascending")
        if self.folds < 2:
            raise ConfigError("cv folds must be >= 2")
        if self.mode not in (PAPER, STANDARD):
            raise ConfigError(f"cv mode must be 'paper' or 'standard', got {self.mode!r}")
        if self.penalty_power not in (1, 2):
            raise ConfigError("penalty_power must be 1 or 2")
        object.__setattr__(self, "lambda_grid", grid)


@dataclass(frozen=True, eq=False)
class CVReport:
    lambda_grid: tuple[float, ...]
    risks: np.ndarray  # folds x grid
    chosen_lambda: float
    mode: str = PAPER
    fold_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def mean_risks(self) -> np.ndarray:
        return self.risks.mean(axis=0)

    def to_rows(self) -> list[dict]:
        rows = []
        for j, lam in enumerate(self.lambda_grid):
            for k in range(self.risks.shape[0]):
                rows.append({"lambda": lam, "fold": k, "risk": float(self.risks[k, j])})
        return rows


def choose_lambda(risks: np.ndarray, grid: Sequence[float]) -> float:
    """Grid value with the smallest mean risk; near-ties go to the smallest lambda."""
    means = np.asarray(risks, dtype=float).mean(axis=0)
    finite = np.isfinite(means)
    if not finite.any():
        raise DataError("cross-validated risks are all non-finite")
    best = np.min(means[finite])
    tol = 1e-15 * max(1.0, abs(best))
    order = np.argsort(np.asarray(grid), kind="stable")
    for j in order:
        if finite[j] and means[j] <= best + tol:
            return float(grid[j])
    raise AssertionError("unreachable")


def fold_risk(
    theta: FittedCDRF,
    residuals: PseudoResiduals,
    a_points,
    b_points,
    lam: float,
    penalized: bool = True,
    penalty_power: int = 1,
    gram_blocks: GramBlocks | None = None,
) -> float:
    """``mean(theta(b)^2 + 2 v theta(b) + 2 u theta(a))`` on the given records,
    plus ``lam * ||theta||_H ** penalty_power`` when penalised."""
    risk = quadratic_form_risk(theta.predict(b_points), theta.predict(a_points), residuals)
    if penalized:
        risk += lam * theta.rkhs_norm(gram_blocks) ** penalty_power
    return risk


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    ids = np.arange(n) % folds
    np.random.default_rng(seed).shuffle(ids)
    return ids


def select_lambda(
    fold2: ExtendedData,
    fusion: FusionConfig,
    mode_est: str,
    kernel: KernelSpec,
    config: CVConfig,
    nuisance_fitter: NuisanceFitter,
) -> CVReport:
    """Cross-validate the ridge penalty on the target fold.

    ``nuisance_fitter(train, seed)`` refits the nuisances on each fold's
    complement. In ``paper`` mode the closed form is then built on the held-out
    part itself and scored there with the penalty; in ``standard`` mode it is
    built on the complement and scored, unpenalised, on the held-out part.
    """
    check_mode(mode_est)
    n = len(fold2)
    K = config.folds
    if n < 2 * K:
        raise DataError(f"target fold too small for {K}-fold cross-validation (n={n})")
    grid = tuple(config.lambda_grid)
    ids = fold_assignment(n, K, config.seed)
    risks = np.zeros((K, len(grid)))
    for k in range(K):
        held = np.nonzero(ids == k)[0]
        train = np.nonzero(ids != k)[0]
        g = nuisance_fitter(fold2.subset(train), k)
        test_part = fold2.subset(held)
        res_test = pseudo_residuals(g, test_part, fusion, mode_est)
        if config.mode == PAPER:
            build_part, res_build = test_part, res_test
        else:
            build_part = fold2.subset(train)
            res_build = pseudo_residuals(g, build_part, fusion, mode_est)
        blocks = gram(kernel, build_part.a, build_part.b)
        for j, lam in enumerate(grid):
            theta = fit_closed_form(res_build, blocks, lam, build_part.a, build_part.b, kernel)
            risks[k, j] = fold_risk(
                theta,
                res_test,
                test_part.a,
                test_part.b,
                lam,
                penalized=config.mode == PAPER,
                penalty_power=config.penalty_power,
                gram_blocks=blocks,
            )
    return CVReport(grid, risks, choose_lambda(risks, grid), config.mode, ids)
