"""Causal dose-response curve estimation with data fusion.

The estimator combines sources that share the target covariate law with
sources that share the target outcome law, through a Neyman-orthogonal loss
minimised in closed form by kernel ridge regression. Typical use::

    from fusioncdrf import SCENARIO_FUSION, fit_cdrf, generate

    data = generate("gaussian", 800, seed=1)
    result = fit_cdrf(data, SCENARIO_FUSION, mode="fused", seed=1)
    result.predict([0.25, 0.5, 0.75])
"""

from __future__ import annotations

__version__ = "0.1.0"

from .cv import CVConfig, CVReport, select_lambda
from .data import FUSED, NONFUSED, Dataset, ExtendedData, FusionConfig, load_dataset, save_dataset, split_sample
from .diagnostics import DiagnosticsInput, bound_ratio, lipschitz_constant
from .errors import ConfigError, DataError, FusionError, NumericError, SourceSetError
from .evaluation import BenchmarkConfig, empirical_risk_vs_truth, monte_carlo_benchmark, percent_reduction
from .kernels import KernelSpec, gram, median_heuristic
from .krr import FittedCDRF, fit_closed_form
from .loss import empirical_risk, pointwise_loss, pseudo_residuals
from .nuisance import NuisanceBounds, NuisanceConfig, NuisanceFit, fit_nuisance
from .pipeline import FitResult, KernelConfig, fit_cdrf
from .reference import ReferenceMeasure
from .simulation import SCENARIO_FUSION, generate, oracle_nuisance, true_cdrf

__all__ = [
    "BenchmarkConfig",
    "CVConfig",
    "CVReport",
    "ConfigError",
    "DataError",
    "Dataset",
    "DiagnosticsInput",
    "ExtendedData",
    "FUSED",
    "FitResult",
    "FittedCDRF",
    "FusionConfig",
    "FusionError",
    "KernelConfig",
    "KernelSpec",
    "NONFUSED",
    "NuisanceBounds",
    "NuisanceConfig",
    "NuisanceFit",
    "NumericError",
    "ReferenceMeasure",
    "SCENARIO_FUSION",
    "SourceSetError",
    "bound_ratio",
    "empirical_risk",
    "empirical_risk_vs_truth",
    "fit_cdrf",
    "fit_closed_form",
    "fit_nuisance",
    "generate",
    "gram",
    "lipschitz_constant",
    "load_dataset",
    "median_heuristic",
    "monte_carlo_benchmark",
    "oracle_nuisance",
    "percent_reduction",
    "pointwise_loss",
    "pseudo_residuals",
    "save_dataset",
    "select_lambda",
    "split_sample",
    "true_cdrf",
]
