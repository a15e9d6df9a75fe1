"""Nuisance estimation on the first fold: inverse source probabilities, the
density ratio (uLSIF), the outcome regression (kernel ridge) and its
covariate-averaged plug-in curve."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .data import FUSED, NONFUSED, Dataset, ExtendedData, FusionConfig, check_mode
from .errors import ConfigError, DataError, NumericError, SourceSetError
from .kernels import GAUSSIAN, LAPLACE, median_heuristic

DEFAULT_RATIO_LAMBDAS = (1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_RATIO_BANDWIDTHS = (0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5)
DEFAULT_RIDGE_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
DEFAULT_OUTCOME_BANDWIDTHS = (0.25, 0.5, 1.0, 2.0)
VARYING = "varying"
OUTCOME_KERNELS = (VARYING, GAUSSIAN, LAPLACE)


@dataclass(frozen=True)
class NuisanceBounds:
    m_w: float = 50.0
    m_xi: float = 100.0
    m_eta: float = 100.0

    def __post_init__(self):
        if min(self.m_w, self.m_xi, self.m_eta) < 1.0:
            raise DataError("nuisance bounds must all be >= 1")

    @property
    def m_lambda(self) -> float:
        return (self.m_eta + self.m_w + 2.0) / self.m_w


@dataclass(frozen=True)
class RatioConfig:
    n_basis: int = 100
    lambda_grid: Sequence[float] = DEFAULT_RATIO_LAMBDAS
    # multiples of the median-heuristic bandwidth searched jointly with lambda
    bandwidth_multipliers: Sequence[float] = DEFAULT_RATIO_BANDWIDTHS
    folds: int = 5


@dataclass(frozen=True)
class OutcomeConfig:
    # candidate kernel families, compared by cross-validation
    kernels: Sequence[str] = (VARYING, GAUSSIAN)
    # multiples of the median-heuristic bandwidth
    bandwidth_multipliers: Sequence[float] = DEFAULT_OUTCOME_BANDWIDTHS
    ridge_grid: Sequence[float] = DEFAULT_RIDGE_GRID
    folds: int = 5

    def __post_init__(self):
        for k in self.kernels:
            if k not in OUTCOME_KERNELS:
                raise ConfigError(f"unknown outcome kernel {k!r}; expected one of {OUTCOME_KERNELS}")
        if not self.kernels or not self.bandwidth_multipliers or not self.ridge_grid:
            raise ConfigError("outcome kernels, bandwidths and ridge grid must be non-empty")


@dataclass(frozen=True)
class NuisanceConfig:
    ratio: RatioConfig = field(default_factory=RatioConfig)
    outcome: OutcomeConfig = field(default_factory=OutcomeConfig)
    bounds: NuisanceBounds = field(default_factory=NuisanceBounds)
    clip_mean: bool = False


# -- model protocols ---------------------------------------------------------


class JointModel(Protocol):
    def predict(self, x: np.ndarray, a: np.ndarray) -> np.ndarray: ...


class CurveModel(Protocol):
    def predict(self, a: np.ndarray) -> np.ndarray: ...


def _features(x, a) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] != x.shape[0]:
        if a.shape[0] == 1:
            a = np.repeat(a, x.shape[0], axis=0)
        elif x.shape[0] == 1:
            x = np.repeat(x, a.shape[0], axis=0)
        else:
            raise DataError("covariate and exposure arrays have different lengths")
    return np.hstack([x, a])


def _kfold_ids(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


# -- source probabilities ----------------------------------------------------


def estimate_source_probs(
    data: Dataset,
    fusion: FusionConfig,
    mode: str = FUSED,
    bounds: NuisanceBounds | None = None,
) -> tuple[float, float]:
    """Inverse empirical probabilities of the covariate- and outcome-aligned
    source sets, capped at ``bounds.m_xi`` / ``bounds.m_eta``."""
    check_mode(mode)
    fusion.require_mode(mode)
    bounds = bounds or NuisanceBounds()
    n = len(data)
    nx = int(fusion.members_x(data.s, mode).sum())
    ny = int(fusion.members_y(data.s, mode).sum())
    if nx == 0 or ny == 0:
        raise SourceSetError("empty source set")
    return min(n / nx, bounds.m_xi), min(n / ny, bounds.m_eta)


# -- density ratio (uLSIF) ---------------------------------------------------


def gaussian_basis(z: np.ndarray, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = cdist(z, centers, metric="sqeuclidean")
    return np.exp(-d2 / (2.0 * bandwidth**2))


def ulsif_coefficients(psi_num: np.ndarray, psi_den: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``(H + lam I) alpha = h`` and truncate negative entries.

    ``H`` is the denominator mean of ``psi psi^T``; ``h`` the numerator mean of
    ``psi``.
    """
    H = psi_den.T @ psi_den / psi_den.shape[0]
    h = psi_num.mean(axis=0)
    A = H + lam * np.eye(H.shape[0])
    try:
        alpha = linalg.solve(A, h, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"singular uLSIF system at lambda={lam}") from exc
    if not np.all(np.isfinite(alpha)):
        raise NumericError(f"non-finite uLSIF solution at lambda={lam}")
    return np.maximum(alpha, 0.0)


def _ulsif_score(alpha: np.ndarray, psi_num: np.ndarray, psi_den: np.ndarray) -> float:
    # squared-error criterion: 0.5 E_den[w^2] - E_num[w]
    w_den = psi_den @ alpha
    w_num = psi_num @ alpha
    return 0.5 * float(np.mean(w_den * w_den)) - float(np.mean(w_num))


@dataclass(frozen=True, eq=False)
class RatioModel:
    centers: np.ndarray
    bandwidth: float
    alpha: np.ndarray
    clip: tuple[float, float]
    lam: float = 0.0

    def predict_features(self, z: np.ndarray) -> np.ndarray:
        raw = gaussian_basis(np.asarray(z, dtype=float), self.centers, self.bandwidth) @ self.alpha
        return np.clip(raw, self.clip[0], self.clip[1])

    def predict(self, x, a) -> np.ndarray:
        return self.predict_features(_features(x, a))


def fit_density_ratio(
    numerator: np.ndarray,
    denominator: np.ndarray,
    config: RatioConfig | None = None,
    seed: int = 0,
    bounds: NuisanceBounds | None = None,
) -> RatioModel:
    """uLSIF estimate of d(numerator law)/d(denominator law) on feature rows."""
    config = config or RatioConfig()
    bounds = bounds or NuisanceBounds()
    num = np.atleast_2d(np.asarray(numerator, dtype=float))
    den = np.atleast_2d(np.asarray(denominator, dtype=float))
    if num.shape[0] == 0 or den.shape[0] == 0:
        raise SourceSetError("empty source set: density-ratio training sample")
    if num.shape[1] != den.shape[1]:
        raise DataError("numerator and denominator dimensions differ")
    rng = np.random.default_rng(seed)
    n_basis = min(config.n_basis, num.shape[0])
    centers = num[np.sort(rng.choice(num.shape[0], size=n_basis, replace=False))]
    bandwidth = median_heuristic(np.vstack([num, den]), family=GAUSSIAN)

    grid = sorted(float(v) for v in config.lambda_grid)
    widths = [bandwidth * float(m) for m in config.bandwidth_multipliers] or [bandwidth]
    folds = min(config.folds, num.shape[0], den.shape[0])
    candidates = [(h, lam) for h in widths for lam in grid]

    scores = np.zeros(len(candidates))
    if len(candidates) > 1 and folds >= 2:
        ids_num = _kfold_ids(num.shape[0], folds, rng)
        ids_den = _kfold_ids(den.shape[0], folds, rng)
        j = 0
        for h in widths:
            psi_num = gaussian_basis(num, centers, h)
            psi_den = gaussian_basis(den, centers, h)
            for lam in grid:
                total = 0.0
                for k in range(folds):
                    tr_n, te_n = ids_num != k, ids_num == k
                    tr_d, te_d = ids_den != k, ids_den == k
                    try:
                        alpha = ulsif_coefficients(psi_num[tr_n], psi_den[tr_d], lam)
                    except NumericError:
                        total = np.inf
                        break
                    total += _ulsif_score(alpha, psi_num[te_n], psi_den[te_d])
                scores[j] = total / folds
                j += 1

    for j in np.argsort(scores, kind="stable"):
        if not np.isfinite(scores[j]):
            break
        h, lam = candidates[j]
        try:
            alpha = ulsif_coefficients(gaussian_basis(num, centers, h), gaussian_basis(den, centers, h), lam)
        except NumericError:
            continue
        return RatioModel(centers, h, alpha, (1.0 / bounds.m_w, bounds.m_w), lam)
    raise NumericError("uLSIF system singular for every lambda in the grid")


def build_ratio_training_sets(
    fold1: ExtendedData, fusion: FusionConfig, mode: str = FUSED
) -> tuple[np.ndarray, np.ndarray]:
    """Numerator rows ``(x, b)`` from covariate-aligned sources, denominator rows
    ``(x, a)`` from outcome-aligned sources (both the intersection when
    nonfused)."""
    check_mode(mode)
    fusion.require_mode(mode)
    in_x = fusion.members_x(fold1.s, mode)
    in_y = fusion.members_y(fold1.s, mode)
    if not in_x.any() or not in_y.any():
        raise SourceSetError("empty source set")
    numerator = np.hstack([fold1.x[in_x], fold1.b[in_x]])
    denominator = np.hstack([fold1.x[in_y], fold1.a[in_y]])
    return numerator, denominator


# -- outcome regression ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegressionModel:
    """Kernel ridge regression of y on ``(x, a)`` with a separable kernel.

    The kernel is ``k_x(x, x') * k_a(a, a')`` on standardised covariates. For
    ``gaussian`` and ``laplace`` both factors share one bandwidth, which gives
    the usual isotropic kernel on the stacked feature. ``varying`` uses the
    linear factor ``1 + x.x'`` for the covariates and a Gaussian factor for the
    exposure, i.e. a varying-coefficient model ``m(x, a) = c0(a) + x.c(a)``.
    """

    anchors: np.ndarray
    coef: np.ndarray
    family: str
    bandwidth: float
    ridge: float
    covariate_dim: int
    x_shift: np.ndarray | None = None
    x_scale: np.ndarray | None = None

    def _standardise(self, x: np.ndarray) -> np.ndarray:
        if self.x_shift is None:
            return x
        return (x - self.x_shift) / self.x_scale

    def _exposure_factor(self, a: np.ndarray, a_anchors: np.ndarray) -> np.ndarray:
        if self.family == LAPLACE:
            return np.exp(-cdist(a, a_anchors, metric="cityblock") / self.bandwidth)
        return np.exp(-cdist(a, a_anchors, metric="sqeuclidean") / (2.0 * self.bandwidth**2))

    def _covariate_factor(self, xs: np.ndarray, x_anchors: np.ndarray) -> np.ndarray:
        if self.family == VARYING:
            return 1.0 + xs @ x_anchors.T
        return self._exposure_factor(xs, x_anchors)

    def _kernel(self, z: np.ndarray, anchors: np.ndarray) -> np.ndarray:
        """Kernel between standardised feature rows."""
        r = self.covariate_dim
        return self._covariate_factor(z[:, :r], anchors[:, :r]) * self._exposure_factor(z[:, r:], anchors[:, r:])

    def predict(self, x, a) -> np.ndarray:
        z = _features(x, a)
        if z.shape[1] != self.anchors.shape[1]:
            raise DataError("feature dimension does not match the fitted model")
        r = self.covariate_dim
        z = np.hstack([self._standardise(z[:, :r]), z[:, r:]])
        return self._kernel(z, self.anchors) @ self.coef

    def averaged_over(self, x_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients of ``a -> mean_i m(x_i, a)`` as an expansion in the
        exposure factor of the kernel."""
        r = self.covariate_dim
        xs = self._standardise(np.atleast_2d(np.asarray(x_rows, dtype=float)))
        kx = self._covariate_factor(xs, self.anchors[:, :r])
        return self.anchors[:, r:], kx.mean(axis=0) * self.coef

    def exposure_kernel(self, a: np.ndarray, a_anchors: np.ndarray) -> np.ndarray:
        return self._exposure_factor(np.asarray(a, dtype=float).reshape(-1, a_anchors.shape[1]), a_anchors)


def _krr_fit_gram(G: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    n = G.shape[0]
    try:
        c, low = linalg.cho_factor(G + n * ridge * np.eye(n), lower=True, check_finite=False)
        return linalg.cho_solve((c, low), y, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericError(f"kernel ridge system not positive definite (ridge={ridge})") from exc


def _krr_cv_scores(G: np.ndarray, y: np.ndarray, grid: Sequence[float], folds: int, rng) -> np.ndarray:
    """Mean squared K-fold prediction error for each ridge value in ``grid``.

    ``rng`` may also be a precomputed array of fold labels."""
    n = G.shape[0]
    ids = rng if isinstance(rng, np.ndarray) else _kfold_ids(n, folds, rng)
    scores = np.zeros(len(grid))
    for k in np.unique(ids):
        tr, te = ids != k, ids == k
        Gtr = G[np.ix_(tr, tr)]
        evals, evecs = linalg.eigh(Gtr, check_finite=False)
        evals = np.maximum(evals, 0.0)
        proj = evecs.T @ y[tr]
        Gte = G[np.ix_(te, tr)] @ evecs
        ntr = int(tr.sum())
        for j, lam in enumerate(grid):
            pred = Gte @ (proj / (evals + ntr * lam))
            scores[j] += float(np.sum((pred - y[te]) ** 2))
    return scores / n


def _base_bandwidth(points: np.ndarray, family: str) -> float:
    try:
        return median_heuristic(points, family=LAPLACE if family == LAPLACE else GAUSSIAN)
    except DataError:
        return 1.0


def fit_krr(
    features: np.ndarray,
    y: np.ndarray,
    config: OutcomeConfig | None = None,
    seed: int = 0,
    covariate_dim: int | None = None,
) -> RegressionModel:
    """Kernel ridge regression with the kernel family, bandwidth multiplier and
    ridge penalty chosen jointly by K-fold CV.

    Bandwidths are multiples of a median heuristic: on the stacked standardised
    feature for the isotropic families, on the exposure alone for ``varying``.
    """
    config = config or OutcomeConfig()
    z = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = z.shape[0]
    if n < 2:
        raise SourceSetError("empty source set: outcome regression needs >= 2 records")
    r = covariate_dim if covariate_dim is not None else z.shape[1] - 1
    shift = z[:, :r].mean(axis=0)
    scale = z[:, :r].std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    zs = np.hstack([(z[:, :r] - shift) / scale, z[:, r:]])

    grid = sorted(float(v) for v in config.ridge_grid)
    folds = min(config.folds, n)
    ids = _kfold_ids(n, folds, np.random.default_rng(seed)) if folds >= 2 else None
    candidates = []
    for family in config.kernels:
        base = _base_bandwidth(zs[:, r:] if family == VARYING else zs, family)
        for mult in config.bandwidth_multipliers:
            candidates.append(RegressionModel(zs, np.zeros(n), family, base * float(mult), 0.0, r, shift, scale))

    best = None
    for proto in candidates:
        G = proto._kernel(zs, zs)
        if ids is not None and (len(grid) > 1 or len(candidates) > 1):
            scores = _krr_cv_scores(G, y, grid, folds, ids)
            j = int(np.argmin(scores))
            score = float(scores[j])
        else:
            j, score = 0, 0.0
        if best is None or score < best[0]:
            best = (score, proto, grid[j], G)
    _, proto, ridge, G = best
    coef = _krr_fit_gram(G, y, ridge)
    return RegressionModel(zs, coef, proto.family, proto.bandwidth, ridge, r, shift, scale)


def fit_outcome_regression(
    fold1: Dataset,
    fusion: FusionConfig,
    mode: str = FUSED,
    config: OutcomeConfig | None = None,
    seed: int = 0,
) -> RegressionModel:
    check_mode(mode)
    fusion.require_mode(mode)
    mask = fusion.members_y(fold1.s, mode)
    if mask.sum() < 2:
        raise SourceSetError("empty source set: outcome regression needs >= 2 records")
    z = _features(fold1.x[mask], fold1.a[mask])
    return fit_krr(z, fold1.y[mask], config, seed, covariate_dim=fold1.covariate_dim)


# -- plug-in curve ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TauModel:
    """``a -> mean_i m(x_i, a)`` over covariate rows of the aligned sources."""

    outcome: JointModel
    x_anchors: np.ndarray

    def __post_init__(self):
        if len(self.x_anchors) == 0:
            raise SourceSetError("empty source set: no covariate anchors for tau")
        if isinstance(self.outcome, RegressionModel):
            a_anchors, coef = self.outcome.averaged_over(self.x_anchors)
            object.__setattr__(self, "_collapsed", (a_anchors, coef))
        else:
            object.__setattr__(self, "_collapsed", None)

    def predict(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        flat = a.reshape(-1, 1) if a.ndim <= 1 else a
        if self._collapsed is not None:
            a_anchors, coef = self._collapsed
            return self.outcome.exposure_kernel(flat, a_anchors) @ coef
        out = np.empty(flat.shape[0])
        for j, aj in enumerate(flat):
            out[j] = np.mean(self.outcome.predict(self.x_anchors, aj[None, :]))
        return out


def fit_tau(outcome: JointModel, fold1: Dataset, fusion: FusionConfig, mode: str = FUSED) -> TauModel:
    check_mode(mode)
    fusion.require_mode(mode)
    mask = fusion.members_x(fold1.s, mode)
    if not mask.any():
        raise SourceSetError("empty source set: no covariate anchors for tau")
    return TauModel(outcome, np.array(fold1.x[mask]))


# -- assembled nuisance ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    xi: float
    eta: float
    ratio: JointModel
    outcome: JointModel
    tau: CurveModel
    mode: str = FUSED
    bounds: NuisanceBounds = field(default_factory=NuisanceBounds)
    clip_mean: bool = False

    def __post_init__(self):
        check_mode(self.mode)
        if self.xi < 1.0 or self.eta < 1.0:
            raise DataError("inverse source probabilities must be >= 1")

    def w(self, x, a) -> np.ndarray:
        raw = np.asarray(self.ratio.predict(x, a), dtype=float)
        return np.clip(raw, 1.0 / self.bounds.m_w, self.bounds.m_w)

    def m(self, x, a) -> np.ndarray:
        out = np.asarray(self.outcome.predict(x, a), dtype=float)
        return np.clip(out, -1.0, 1.0) if self.clip_mean else out

    def tau_at(self, a) -> np.ndarray:
        out = np.asarray(self.tau.predict(a), dtype=float)
        return np.clip(out, -1.0, 1.0) if self.clip_mean else out


def assemble_nuisance(
    xi: float,
    eta: float,
    ratio: JointModel,
    outcome: JointModel,
    tau: CurveModel,
    mode: str,
    bounds: NuisanceBounds | None = None,
    clip_mean: bool = False,
    part_modes: Sequence[str] = (),
) -> NuisanceFit:
    if any(m != mode for m in part_modes):
        raise DataError("nuisance parts were fit in different modes")
    return NuisanceFit(xi, eta, ratio, outcome, tau, mode, bounds or NuisanceBounds(), clip_mean)


def fit_nuisance(
    fold1: ExtendedData,
    fusion: FusionConfig,
    mode: str = FUSED,
    config: NuisanceConfig | None = None,
    seed: int = 0,
) -> NuisanceFit:
    """Fit every nuisance component on ``fold1`` (which must carry draws ``b``)."""
    from .data import derive_seed

    config = config or NuisanceConfig()
    xi, eta = estimate_source_probs(fold1.data, fusion, mode, config.bounds)
    num, den = build_ratio_training_sets(fold1, fusion, mode)
    ratio = fit_density_ratio(num, den, config.ratio, derive_seed(seed, "ratio"), config.bounds)
    outcome = fit_outcome_regression(fold1.data, fusion, mode, config.outcome, derive_seed(seed, "outcome"))
    tau = fit_tau(outcome, fold1.data, fusion, mode)
    return assemble_nuisance(xi, eta, ratio, outcome, tau, mode, config.bounds, config.clip_mean)


__all__ = [
    "FUSED",
    "NONFUSED",
    "NuisanceBounds",
    "NuisanceConfig",
    "NuisanceFit",
    "OutcomeConfig",
    "RatioConfig",
    "RatioModel",
    "RegressionModel",
    "TauModel",
    "assemble_nuisance",
    "build_ratio_training_sets",
    "estimate_source_probs",
    "fit_density_ratio",
    "fit_krr",
    "fit_nuisance",
    "fit_outcome_regression",
    "fit_tau",
    "ulsif_coefficients",
]
