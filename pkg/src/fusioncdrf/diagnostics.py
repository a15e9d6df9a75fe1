"""Lipschitz constant of the loss and the fusion / no-fusion bound ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise DataError("delta must lie in (0, 1)")


def _check_positive(**values: float) -> None:
    for name, v in values.items():
        if not (v > 0 and math.isfinite(v)):
            raise DataError(f"{name} must be positive and finite")


def tail_constant(delta: float, sigma: float, L_subexp: float) -> float:
    """``1 + max(sigma sqrt(2 log(8/delta)), 2 L log(8/delta))``."""
    _check_delta(delta)
    _check_positive(sigma=sigma, L_subexp=L_subexp)
    log_term = math.log(8.0 / delta)
    return 1.0 + max(sigma * math.sqrt(2.0 * log_term), 2.0 * L_subexp * log_term)


def lipschitz_constant(delta: float, sigma: float, L_subexp: float, xi: float, eta: float, w_sup: float) -> float:
    _check_positive(xi=xi, eta=eta, w_sup=w_sup)
    c = tail_constant(delta, sigma, L_subexp)
    return 4.0 * (1.0 + delta) ** 2 * (1.0 + xi + c * eta * w_sup)


def m_lambda(m_w: float, m_eta: float) -> float:
    """``(M_eta + M_w + 2) / M_w`` for the uniform nuisance bounds."""
    _check_positive(m_w=m_w, m_eta=m_eta)
    return (m_eta + m_w + 2.0) / m_w


@dataclass(frozen=True)
class DiagnosticsInput:
    delta: float
    sigma: float
    L_subexp: float
    xi: float
    eta: float
    w_sup: float
    xi_u: float
    eta_u: float
    w_sup_u: float
    p: float
    alpha: float

    def __post_init__(self):
        _check_delta(self.delta)
        _check_positive(
            sigma=self.sigma, L_subexp=self.L_subexp, xi=self.xi, eta=self.eta, w_sup=self.w_sup,
            xi_u=self.xi_u, eta_u=self.eta_u, w_sup_u=self.w_sup_u,
        )
        if not 0.0 < self.p < 1.0:
            raise DataError("p must lie in (0, 1)")
        if not 0.0 < self.alpha < 0.5:
            raise DataError("alpha must lie in (0, 0.5)")


def bound_exponent(p: float, alpha: float) -> float:
    s = 1.0 - 2.0 * alpha
    return 2.0 * (1.0 + p) * s / (p + s)


def bound_ratio(inp: DiagnosticsInput) -> float:
    """Excess-risk bound with fusion divided by the bound without fusion."""
    c = tail_constant(inp.delta, inp.sigma, inp.L_subexp)
    fused = 1.0 + inp.xi + c * inp.eta * inp.w_sup
    nonfused = 1.0 + inp.xi_u + c * inp.eta_u * inp.w_sup_u
    return (fused / nonfused) ** bound_exponent(inp.p, inp.alpha)


def sup_on_grid(ratio_model, covariate_dim: int = 3, points: int = 11, lo: float = 0.01, hi: float = 0.99) -> float:
    """Maximum of a ``(x, a) -> w`` model over a product grid on ``[lo, hi]``."""
    axis = np.linspace(lo, hi, points)
    mesh = np.meshgrid(*([axis] * (covariate_dim + 1)), indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return float(np.max(ratio_model.predict(pts[:, :covariate_dim], pts[:, covariate_dim])))
