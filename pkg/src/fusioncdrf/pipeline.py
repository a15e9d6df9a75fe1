"""Two-stage estimation: nuisances on one half, closed-form target fit on the other."""

from __future__ import annotations

import contextlib
import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .cv import CVConfig, CVReport, select_lambda
from .data import (
    FUSED,
    NONFUSED,
    Dataset,
    ExtendedData,
    FusionConfig,
    check_mode,
    derive_seed,
    extend_with_mu_draws,
    split_sample,
)
from .errors import ConfigError, FusionError
from .kernels import LAPLACE, KernelSpec, gram, median_heuristic
from .krr import FittedCDRF, fit_closed_form
from .loss import pseudo_residuals
from .nuisance import NuisanceConfig, NuisanceFit, fit_nuisance
from .reference import ReferenceMeasure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelConfig:
    family: str = LAPLACE
    bandwidth: float | str = "median"
    pool: str = "a_only"

    def __post_init__(self):
        if self.pool not in ("a_only", "a_and_b"):
            raise ConfigError("bandwidth_pool must be 'a_only' or 'a_and_b'")
        if self.bandwidth != "median":
            try:
                value = float(self.bandwidth)
            except (TypeError, ValueError):
                raise ConfigError(f"bandwidth must be 'median' or a positive number, got {self.bandwidth!r}") from None
            if not value > 0:
                raise ConfigError("bandwidth must be positive")

    def resolve(self, fold: ExtendedData) -> KernelSpec:
        if self.bandwidth == "median":
            pts = fold.a if self.pool == "a_only" else np.vstack([fold.a, fold.b])
            return KernelSpec(self.family, median_heuristic(pts, self.family))
        return KernelSpec(self.family, float(self.bandwidth))


@dataclass(frozen=True, eq=False)
class FitResult:
    model: FittedCDRF
    nuisance: NuisanceFit
    cv: CVReport
    mode: str
    seed_trace: dict = field(default_factory=dict)
    fold1_index: np.ndarray = field(default=None)  # type: ignore[assignment]
    fold2_index: np.ndarray = field(default=None)  # type: ignore[assignment]

    def predict(self, t) -> np.ndarray:
        return self.model.predict(t)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "model": self.model.to_dict(),
            "nuisance": {
                "xi": self.nuisance.xi,
                "eta": self.nuisance.eta,
                "m_w": self.nuisance.bounds.m_w,
                "ratio_lambda": getattr(self.nuisance.ratio, "lam", None),
                "outcome_ridge": getattr(self.nuisance.outcome, "ridge", None),
            },
            "cv": {
                "mode": self.cv.mode,
                "lambda_grid": list(self.cv.lambda_grid),
                "mean_risks": self.cv.mean_risks.tolist(),
                "chosen_lambda": self.cv.chosen_lambda,
            },
            "seed_trace": self.seed_trace,
            "n_fold1": int(len(self.fold1_index)),
            "n_fold2": int(len(self.fold2_index)),
        }


@contextlib.contextmanager
def stage(name: str):
    """Prefix library errors raised inside the block with the stage name."""
    try:
        yield
    except FusionError as exc:
        msg = str(exc)
        if not msg.startswith("["):
            msg = f"[{name}] {msg}"
        raise type(exc)(msg) from exc


def fit_cdrf(
    data: Dataset,
    fusion: FusionConfig,
    mode: str = FUSED,
    mu: ReferenceMeasure | None = None,
    kernel_cfg: KernelConfig | None = None,
    cv_cfg: CVConfig | None = None,
    nuisance_cfg: NuisanceConfig | None = None,
    seed: int = 0,
    split_fraction: float = 0.5,
) -> FitResult:
    """Estimate the dose-response curve with (``fused``) or without
    (``nonfused``) the partially aligned sources."""
    check_mode(mode)
    mu = mu or ReferenceMeasure.uniform()
    kernel_cfg = kernel_cfg or KernelConfig()
    cv_cfg = cv_cfg or CVConfig()
    nuisance_cfg = nuisance_cfg or NuisanceConfig()
    seeds = {
        "master": int(seed),
        "split": derive_seed(seed, "split"),
        "draws_fold1": derive_seed(seed, "draws", 1),
        "draws_fold2": derive_seed(seed, "draws", 2),
        "nuisance": derive_seed(seed, "nuisance"),
        "cv": derive_seed(seed, "cv"),
    }

    with stage("data"):
        fusion.require_mode(mode)
        if mode == NONFUSED:
            data = data.restrict_sources(fusion.intersection)
        part1, part2 = split_sample(data, split_fraction, seeds["split"])
        fold1 = extend_with_mu_draws(part1, mu, seeds["draws_fold1"])
        fold2 = extend_with_mu_draws(part2, mu, seeds["draws_fold2"])

    with stage("nuisance"):
        g = fit_nuisance(fold1, fusion, mode, nuisance_cfg, seeds["nuisance"])

    with stage("kernel"):
        kernel = kernel_cfg.resolve(fold2)

    def refit(train: ExtendedData, k: int) -> NuisanceFit:
        return fit_nuisance(train, fusion, mode, nuisance_cfg, derive_seed(seed, "cv_nuisance", k))

    with stage("cv"):
        # small target folds (e.g. no-fusion at n=100) cannot hold K folds of two records each
        folds = min(cv_cfg.folds, max(len(fold2) // 2, 2))
        if folds < cv_cfg.folds:
            log.info("target fold has %d records; using %d cross-validation folds", len(fold2), folds)
        run_cfg = dataclasses.replace(cv_cfg, folds=folds, seed=seeds["cv"])
        report = select_lambda(fold2, fusion, mode, kernel, run_cfg, refit)

    with stage("target"):
        res = pseudo_residuals(g, fold2, fusion, mode)
        blocks = gram(kernel, fold2.a, fold2.b)
        model = fit_closed_form(res, blocks, report.chosen_lambda, fold2.a, fold2.b, kernel)

    return FitResult(model, g, report, mode, seeds, part1.index, part2.index)
