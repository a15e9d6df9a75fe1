"""Orthogonal loss with the auxiliary-draw approximation, its no-fusion
counterpart, and the per-record pseudo-residuals of the closed-form fit."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .data import ExtendedData, FusionConfig, check_mode
from .errors import NumericError
from .nuisance import NuisanceFit


class NuisanceValues(NamedTuple):
    """Nuisance evaluations at each record of a fold."""

    xi: float
    eta: float
    w_a: np.ndarray  # w(x_i, a_i)
    m_a: np.ndarray  # m(x_i, a_i)
    m_b: np.ndarray  # m(x_i, b_i)
    tau_a: np.ndarray
    tau_b: np.ndarray
    in_x: np.ndarray  # indicator arrays as floats
    in_y: np.ndarray


class PseudoResiduals(NamedTuple):
    u: np.ndarray
    v: np.ndarray


def evaluate_nuisance(g: NuisanceFit, fold: ExtendedData, fusion: FusionConfig, mode: str) -> NuisanceValues:
    check_mode(mode)
    vals = NuisanceValues(
        float(g.xi),
        float(g.eta),
        g.w(fold.x, fold.a),
        g.m(fold.x, fold.a),
        g.m(fold.x, fold.b),
        g.tau_at(fold.a),
        g.tau_at(fold.b),
        fusion.members_x(fold.s, mode).astype(float),
        fusion.members_y(fold.s, mode).astype(float),
    )
    for name in ("w_a", "m_a", "m_b", "tau_a", "tau_b"):
        arr = getattr(vals, name)
        bad = ~np.isfinite(arr)
        if bad.any():
            raise NumericError(f"non-finite nuisance value {name} at record {int(np.argmax(bad))}")
    return vals


def loss_terms(theta_b, theta_a, nv: NuisanceValues, y) -> np.ndarray:
    """Vectorised pointwise loss. The same expression serves both modes since
    the indicators and nuisances already encode the mode."""
    db = theta_b - nv.tau_b
    da = theta_a - nv.tau_a
    return (
        db * db
        + 2.0 * nv.xi * nv.in_x * db * (nv.tau_b - nv.m_b)
        + 2.0 * nv.eta * nv.w_a * nv.in_y * da * (nv.m_a - y)
    )


def pointwise_loss(
    theta_at_b: float,
    theta_at_a: float,
    *,
    xi: float,
    eta: float,
    w_a: float,
    m_a: float,
    m_b: float,
    tau_a: float,
    tau_b: float,
    y: float,
    s: int,
    fusion: FusionConfig,
    mode: str,
) -> float:
    """Loss of one extended record ``(x, a, y, s, b)`` given nuisance values."""
    check_mode(mode)
    values = (theta_at_b, theta_at_a, xi, eta, w_a, m_a, m_b, tau_a, tau_b, y)
    if not all(np.isfinite(v) for v in values):
        raise NumericError("non-finite input to pointwise loss")
    s_arr = np.array([s])
    nv = NuisanceValues(
        xi, eta, w_a, m_a, m_b, tau_a, tau_b,
        float(fusion.members_x(s_arr, mode)[0]),
        float(fusion.members_y(s_arr, mode)[0]),
    )
    return float(loss_terms(theta_at_b, theta_at_a, nv, y))


def residuals_from_values(nv: NuisanceValues, y: np.ndarray) -> PseudoResiduals:
    u = nv.in_y * nv.eta * nv.w_a * (nv.m_a - y)
    v = nv.in_x * nv.xi * (nv.tau_b - nv.m_b) - nv.tau_b
    return PseudoResiduals(u, v)


def pseudo_residuals(g: NuisanceFit, fold: ExtendedData, fusion: FusionConfig, mode: str) -> PseudoResiduals:
    return residuals_from_values(evaluate_nuisance(g, fold, fusion, mode), fold.y)


def _theta_at(theta: Callable, pts: np.ndarray) -> np.ndarray:
    return np.asarray(theta(pts), dtype=float).reshape(-1)


def empirical_risk(
    theta: Callable[[np.ndarray], np.ndarray],
    g: NuisanceFit,
    fold: ExtendedData,
    fusion: FusionConfig,
    mode: str,
) -> float:
    """Mean pointwise loss over ``fold``; ``theta`` maps an exposure array to values."""
    if len(fold) == 0:
        raise ValueError("empty fold")
    nv = evaluate_nuisance(g, fold, fusion, mode)
    terms = loss_terms(_theta_at(theta, fold.b), _theta_at(theta, fold.a), nv, fold.y)
    return float(np.mean(terms))


def quadratic_form_risk(theta_b: np.ndarray, theta_a: np.ndarray, res: PseudoResiduals) -> float:
    """``mean(theta(b)^2 + 2 v theta(b) + 2 u theta(a))``: the theta-dependent
    part of the empirical risk."""
    return float(np.mean(theta_b * theta_b + 2.0 * res.v * theta_b + 2.0 * res.u * theta_a))


def risk_constant(nv: NuisanceValues, y: np.ndarray) -> float:
    """The theta-free remainder, so that
    ``empirical_risk == quadratic_form_risk + risk_constant``."""
    c = (
        nv.tau_b**2
        - 2.0 * nv.xi * nv.in_x * (nv.tau_b - nv.m_b) * nv.tau_b
        - 2.0 * nv.eta * nv.w_a * nv.in_y * (nv.m_a - y) * nv.tau_a
    )
    return float(np.mean(c))


# -- nuisance perturbations (orthogonality checks) ------------------------------


@dataclass(frozen=True)
class NuisanceDirection:
    """A direction in nuisance space: scalar shifts for the inverse
    probabilities and bounded functions for ``w``, ``m`` and ``tau``."""

    d_xi: float
    d_eta: float
    d_w: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d_m: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d_tau: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def random(cls, rng: np.random.Generator, covariate_dim: int) -> NuisanceDirection:
        """Smooth random direction with every component bounded by 1 in absolute value."""
        fx = rng.normal(size=covariate_dim)
        ph = rng.uniform(0, 2 * np.pi, size=3)
        fr = rng.uniform(1.0, 4.0, size=3)

        def d_w(x, a):
            return np.sin(fr[0] * np.asarray(a).reshape(-1) + np.asarray(x) @ fx + ph[0])

        def d_m(x, a):
            return np.cos(fr[1] * np.asarray(a).reshape(-1) + np.asarray(x) @ fx + ph[1])

        def d_tau(a):
            return np.sin(fr[2] * np.asarray(a).reshape(-1) + ph[2])

        return cls(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), d_w, d_m, d_tau)


def perturbed_values(nv: NuisanceValues, fold: ExtendedData, direction: NuisanceDirection, t: float) -> NuisanceValues:
    """Nuisance values of ``g + t * direction`` on ``fold`` (no clipping)."""
    return nv._replace(
        xi=nv.xi + t * direction.d_xi,
        eta=nv.eta + t * direction.d_eta,
        w_a=nv.w_a + t * direction.d_w(fold.x, fold.a),
        m_a=nv.m_a + t * direction.d_m(fold.x, fold.a),
        m_b=nv.m_b + t * direction.d_m(fold.x, fold.b),
        tau_a=nv.tau_a + t * direction.d_tau(fold.a),
        tau_b=nv.tau_b + t * direction.d_tau(fold.b),
    )


def nuisance_directional_derivative(
    theta: Callable[[np.ndarray], np.ndarray],
    g: NuisanceFit,
    fold: ExtendedData,
    fusion: FusionConfig,
    mode: str,
    direction: NuisanceDirection,
    step: float = 1e-4,
) -> float:
    """Central finite difference of the empirical risk along ``direction`` at ``g``."""
    nv = evaluate_nuisance(g, fold, fusion, mode)
    tb, ta = _theta_at(theta, fold.b), _theta_at(theta, fold.a)
    up = loss_terms(tb, ta, perturbed_values(nv, fold, direction, step), fold.y)
    down = loss_terms(tb, ta, perturbed_values(nv, fold, direction, -step), fold.y)
    return float(np.mean(up - down) / (2.0 * step))
