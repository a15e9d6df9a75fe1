"""Reference measures on the exposure space [0, 1]."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError

DENSITY_FLOOR = 1e-12


def beta_draws(rng: np.random.Generator, alpha, beta, size=None) -> np.ndarray:
    """Beta variates as ``G1 / (G1 + G2)`` with independent Gamma draws.

    ``alpha`` and ``beta`` may be arrays (broadcast against ``size``).
    """
    g1 = rng.standard_gamma(alpha, size=size)
    g2 = rng.standard_gamma(beta, size=size)
    total = g1 + g2
    # both gammas can underflow to 0 for tiny shapes; split the mass evenly then
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, g1 / np.where(total > 0, total, 1.0), 0.5)
    return out


def beta_log_pdf(a, alpha, beta) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    log_norm = gammaln(alpha + beta) - gammaln(alpha) - gammaln(beta)
    return log_norm + (alpha - 1.0) * np.log(a) + (beta - 1.0) * np.log1p(-a)


@dataclass(frozen=True)
class ReferenceMeasure:
    """Uniform(0, 1) or Beta(alpha, beta) on the unit interval."""

    kind: str = "uniform"
    alpha: float = 1.0
    beta: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("uniform", "beta"):
            raise ConfigError(f"unknown reference measure kind {self.kind!r}")
        if self.kind == "beta" and not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("Beta parameters must be strictly positive")
        if self.dim != 1:
            raise ConfigError("only one-dimensional reference measures are supported")

    @classmethod
    def uniform(cls) -> ReferenceMeasure:
        return cls("uniform")

    @classmethod
    def beta_law(cls, alpha: float, beta: float) -> ReferenceMeasure:
        return cls("beta", float(alpha), float(beta))

    @classmethod
    def parse(cls, text: str) -> ReferenceMeasure:
        """Parse ``uniform`` or ``beta(a,b)``."""
        t = text.strip().lower().replace(" ", "")
        if t in ("uniform", "uniform01", "uniform(0,1)"):
            return cls.uniform()
        m = re.fullmatch(r"beta\(([^,]+),([^,]+)\)", t)
        if m:
            try:
                return cls.beta_law(float(m.group(1)), float(m.group(2)))
            except ValueError:
                pass
        raise ConfigError(f"cannot parse reference measure {text!r}")

    @property
    def label(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        return f"beta({self.alpha:g},{self.beta:g})"

    def __str__(self) -> str:
        return self.label

    @property
    def mean(self) -> float:
        return 0.5 if self.kind == "uniform" else self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        if self.kind == "uniform":
            return 1.0 / 12.0
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def sample(self, n: int, seed: int | np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        if self.kind == "uniform":
            return rng.random(n)
        return beta_draws(rng, self.alpha, self.beta, size=n)

    def density(self, a) -> np.ndarray | float:
        """Lebesgue density; for U-shaped Beta laws the argument is clamped into
        ``[1e-12, 1 - 1e-12]`` so the boundary returns a finite value."""
        arr = np.asarray(a, dtype=float)
        if np.any((arr < 0.0) | (arr > 1.0)) or not np.all(np.isfinite(arr)):
            raise ValueError("density argument outside [0, 1]")
        if self.kind == "uniform":
            out = np.ones_like(arr)
        else:
            clamped = np.clip(arr, DENSITY_FLOOR, 1.0 - DENSITY_FLOOR)
            out = np.exp(beta_log_pdf(clamped, self.alpha, self.beta))
        return float(out) if out.ndim == 0 else out
