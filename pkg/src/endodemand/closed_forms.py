"""Analytic pricing and demand curves for the constant-absolute-risk market.

When every participant has exponential utility the clearing price collapses
to the exponentially tilted expectation E[Z e^{-aZ}]/E[e^{-aZ}] with a the
aggregated (harmonic) risk aversion, and several payoff laws admit closed-form
order-book densities and volume-weighted average prices.  These functions
take distribution parameters directly and deliberately share no code with the
numeric engine: they double as its oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scenario import RandomVariable

__all__ = [
    "EsscherMarket",
    "esscher_price",
    "normal_curves",
    "poisson_curves",
    "bernoulli_curves",
    "gamma_curves",
    "discrete_counterexample_report",
    "CounterexampleReport",
]


@dataclass(frozen=True)
class EsscherMarket:
    """Aggregated risk aversion alpha = (sum_i 1/alpha_i)^(-1) > 0."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")

    @classmethod
    def from_agents(cls, alphas) -> "EsscherMarket":
        alphas = np.asarray(alphas, dtype=float)
        if np.any(alphas <= 0):
            raise ValidationError("every agent alpha must be positive")
        return cls(alpha=float(1.0 / np.sum(1.0 / alphas)))


def esscher_price(market: EsscherMarket, z: RandomVariable) -> float:
    """E[Z e^{-alpha Z}] / E[e^{-alpha Z}], computed with a stabilized tilt."""
    vals = z.values
    w = z.space.weights
    e = -market.alpha * vals
    tilt = w * np.exp(e - e.max())
    return float((tilt @ vals) / tilt.sum())


def normal_curves(market: EsscherMarket, mu, cov, s):
    """Jointly normal payoffs: f = mu - 2*alpha*C*s, f_bar = mu - alpha*C*s.

    The marginal curve is linear in the liquidated quantities; diagonal
    covariance means each asset's price depends on its own quantity only.
    Payoffs are unbounded here, so only the closed forms (not the general
    engine guarantees) apply.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.shape != (mu.size, mu.size):
        raise ValidationError("covariance shape does not match the mean vector")
    sym = (cov + cov.T) / 2.0
    if not np.allclose(cov, sym, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValidationError("covariance must be symmetric")
    if np.min(np.linalg.eigvalsh(sym)) < -1e-10 * max(1.0, np.abs(cov).max()):
        raise ValidationError("covariance must be positive semidefinite")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.shape != mu.shape:
        raise ValidationError("s must have one entry per asset")
    cs = cov @ s
    return mu - 2.0 * market.alpha * cs, mu - market.alpha * cs


def poisson_curves(market: EsscherMarket, lam: float, s):
    """Poisson payoffs: f = (1 - a*s) * lam * e^{-a*s}, f_bar = lam * e^{-a*s}.

    The average curve is the classic exponential demand curve; the marginal
    curve crosses zero at s = 1/alpha, the order book's finite depth.
    """
    lam = float(lam)
    if lam <= 0:
        raise ValidationError("lam must be positive")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("s must be nonnegative")
    a = market.alpha
    f_bar = lam * np.exp(-a * s)
    return (1.0 - a * s) * f_bar, f_bar


def bernoulli_curves(market: EsscherMarket, p: float, s):
    """Bernoulli payoffs: f_bar = p / (p + (1-p) e^{a s}) and the matching
    marginal curve with numerator p^2 + (1 - a*s) p (1-p) e^{a s}."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValidationError("p must lie in [0, 1]")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("s must be nonnegative")
    a = market.alpha
    den = p + (1.0 - p) * np.exp(a * s)
    f_bar = p / den
    f = (p * p + (1.0 - a * s) * p * (1.0 - p) * np.exp(a * s)) / den**2
    return f, f_bar


def gamma_curves(market: EsscherMarket, k: float, theta: float, s):
    """Gamma payoffs: f = k*th / (1 + a*th*s)^2, f_bar = k*th / (1 + a*th*s)."""
    k, theta = float(k), float(theta)
    if k <= 0 or theta <= 0:
        raise ValidationError("k and theta must be positive")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("s must be nonnegative")
    den = 1.0 + market.alpha * theta * s
    return k * theta / den**2, k * theta / den


_CX_SUPPORT = np.array([0.0, 1.0, 16.0])
_CX_PROBS = np.array([0.02, 0.49, 0.49])


@dataclass(frozen=True)
class CounterexampleReport:
    """Positive skewness does not buy convexity of the average demand curve.

    For the three-point payoff {0, 1, 16} with weights (0.02, 0.49, 0.49) the
    skewness is positive (so the curve is convex near zero), yet at the order
    book depth s = 1/alpha the second derivative alpha^2 E-tilted[(q-fbar)^3]
    is negative.
    """

    skewness: float
    depth: float
    f_bar_at_depth: float
    second_difference: float
    analytic_second_derivative: float


def _cx_f_bar(alpha: float, s: float) -> float:
    w = _CX_PROBS * np.exp(-alpha * s * _CX_SUPPORT)
    return float((w @ _CX_SUPPORT) / w.sum())


def discrete_counterexample_report(market: EsscherMarket,
                                   h_scale: float = 1e-3) -> CounterexampleReport:
    mean = float(_CX_PROBS @ _CX_SUPPORT)
    var = float(_CX_PROBS @ (_CX_SUPPORT - mean) ** 2)
    m3 = float(_CX_PROBS @ (_CX_SUPPORT - mean) ** 3)
    skew = m3 / var**1.5

    a = market.alpha
    depth = 1.0 / a
    fb = _cx_f_bar(a, depth)
    h = h_scale / a
    d2 = (_cx_f_bar(a, depth + h) - 2.0 * fb + _cx_f_bar(a, depth - h)) / h**2

    w = _CX_PROBS * np.exp(-a * depth * _CX_SUPPORT)
    w = w / w.sum()
    analytic = a * a * float(w @ (_CX_SUPPORT - fb) ** 3)
    return CounterexampleReport(
        skewness=skew,
        depth=depth,
        f_bar_at_depth=fb,
        second_difference=d2,
        analytic_second_derivative=analytic,
    )
