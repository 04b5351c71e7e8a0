"""Integrated risk aversion of the representative market participant.

A `RiskProfile` packages the function ``r`` that tilts pricing expectations,
its exact derivative ``r_prime``, and the domain it lives on.  Built-ins cover
the two canonical markets (constant absolute risk aversion -> linear r on the
whole line; constant relative risk aversion -> logarithmic r on the positive
half line).  Custom profiles are grid-validated: strictly increasing, positive
nonincreasing derivative, and derivative consistent with finite differences
of r.  Prices depend on r only through differences, so each built-in is
normalized to r(x_ref) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import ValidationError

FULL_LINE = "full_line"
POSITIVE_HALF_LINE = "positive_half_line"

GRID_POINTS_DEFAULT = 1024
_DERIVATIVE_RTOL = 1e-6


@dataclass(frozen=True)
class RiskProfile:
    """Tilting function r, its derivative, and domain metadata.

    ``lower_singularity`` is True when r(x) -> -inf as x approaches the lower
    edge of the domain (the logarithmic profile with eta > 0).  ``kind`` tags
    built-ins so solvers can take exact algebraic shortcuts for linear r.
    Profiles are immutable and safe to share across threads.
    """

    domain: Literal["full_line", "positive_half_line"]
    r: Callable[[np.ndarray], np.ndarray]
    r_prime: Callable[[np.ndarray], np.ndarray]
    lower_singularity: bool = False
    kind: str = "custom"
    alpha: float | None = None
    eta: float | None = None
    x_ref: float | None = None

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the (open, for the half line) domain."""
        x = np.asarray(x, dtype=float)
        if self.domain == FULL_LINE:
            return np.isfinite(x)
        return x > 0.0


def linear_profile(alpha: float, x_ref: float = 0.0) -> RiskProfile:
    """r(x) = alpha * (x - x_ref) on the whole line; constant derivative alpha."""
    alpha = float(alpha)
    x_ref = float(x_ref)
    if alpha <= 0:
        raise ValidationError("alpha must be positive")

    def r(x):
        return alpha * (np.asarray(x, dtype=float) - x_ref)

    def r_prime(x):
        return np.full_like(np.asarray(x, dtype=float), alpha)

    return RiskProfile(FULL_LINE, r, r_prime, lower_singularity=False,
                       kind="linear", alpha=alpha, x_ref=x_ref)


def log_profile(eta: float, x_ref: float) -> RiskProfile:
    """r(x) = eta * (log x - log x_ref) on the positive half line.

    eta = 0 degenerates to r = 0 (risk-neutral edge case; not strictly
    increasing, accepted for completeness but outside the usual assumptions).
    """
    eta = float(eta)
    x_ref = float(x_ref)
    if x_ref <= 0:
        raise ValidationError("x_ref must be positive")
    if eta < 0:
        raise ValidationError("eta must be nonnegative")
    log_ref = np.log(x_ref)

    if eta == 0.0:
        # avoid 0 * log(0) = nan at the domain edge
        def r(x):
            return np.zeros_like(np.asarray(x, dtype=float))

        def r_prime(x):
            return np.zeros_like(np.asarray(x, dtype=float))
    else:
        def r(x):
            return eta * (np.log(np.asarray(x, dtype=float)) - log_ref)

        def r_prime(x):
            return eta / np.asarray(x, dtype=float)

    return RiskProfile(POSITIVE_HALF_LINE, r, r_prime,
                       lower_singularity=eta > 0.0,
                       kind="log", eta=eta, x_ref=x_ref)


def validate_profile_grid(profile: RiskProfile, working_interval,
                          grid_points: int = GRID_POINTS_DEFAULT) -> None:
    """Grid check of the standing assumptions on r, raising with violators.

    Checks on `grid_points` equally spaced points of the working interval:
    r finite and strictly increasing; r_prime positive and nonincreasing;
    r_prime consistent with a central finite difference of r at 1e-6
    relative (with an absolute floor covering float cancellation, so nearly
    flat tails do not trip the check spuriously).
    """
    lo, hi = float(working_interval[0]), float(working_interval[1])
    if not lo < hi:
        raise ValidationError("working interval must satisfy lo < hi")
    if profile.domain == POSITIVE_HALF_LINE and lo <= 0:
        raise ValidationError("working interval must be positive for this domain")
    if grid_points < 8:
        raise ValidationError("grid_points must be at least 8")
    z = np.linspace(lo, hi, int(grid_points))
    rv = np.asarray(profile.r(z), dtype=float)
    rp = np.asarray(profile.r_prime(z), dtype=float)
    if rv.shape != z.shape or rp.shape != z.shape:
        raise ValidationError("r and r_prime must map arrays to arrays of the same shape")
    if not np.all(np.isfinite(rv)) or not np.all(np.isfinite(rp)):
        raise ValidationError("r/r_prime must be finite on the working interval")

    scale_r = max(1.0, float(np.abs(rv).max()))
    # ties at the resolution of the float format are saturation, not flatness;
    # strictness is still enforced through r_prime > 0 below
    bad = np.where(np.diff(rv) < -8.0 * np.finfo(float).eps * scale_r)[0]
    if bad.size:
        pts = ", ".join(f"{z[i]:.6g}" for i in bad[:5])
        raise ValidationError(f"r is not strictly increasing near z = {pts}")
    bad = np.where(rp <= 0)[0]
    if bad.size:
        pts = ", ".join(f"{z[i]:.6g}" for i in bad[:5])
        raise ValidationError(f"r_prime is not positive at z = {pts}")
    slack = 1e-12 * max(1.0, float(np.abs(rp).max()))
    bad = np.where(np.diff(rp) > slack)[0]
    if bad.size:
        pts = ", ".join(f"{z[i]:.6g}" for i in bad[:5])
        raise ValidationError(f"r_prime increases (r not concave) near z = {pts}")

    # derivative cross-check with a per-point step small enough that the
    # truncation error stays below the 1e-6 relative budget
    h = 1e-4 * np.maximum(1.0, np.abs(z))
    ok = (z - h >= lo) & (z + h <= hi)
    if profile.domain == POSITIVE_HALF_LINE:
        ok &= z - h > 0
    zi, hi_ = z[ok], h[ok]
    fd = (np.asarray(profile.r(zi + hi_)) - np.asarray(profile.r(zi - hi_))) / (2.0 * hi_)
    floor = 64.0 * np.finfo(float).eps * scale_r / hi_
    tol = _DERIVATIVE_RTOL * np.abs(rp[ok]) + floor
    bad = np.where(np.abs(fd - rp[ok]) > tol)[0]
    if bad.size:
        pts = ", ".join(f"{zi[i]:.6g}" for i in bad[:5])
        raise ValidationError(
            f"r_prime disagrees with central differences of r near z = {pts}"
        )


def custom_profile(r, r_prime, domain: str, lower_singularity: bool,
                   working_interval, grid_points: int = GRID_POINTS_DEFAULT) -> RiskProfile:
    """Wrap caller-supplied (r, r_prime), validated on the working interval.

    The derivative must be analytic (exact): it feeds sign decisions in the
    uniqueness certificates and the order-book density, where finite
    differences are not trustworthy.
    """
    if domain not in (FULL_LINE, POSITIVE_HALF_LINE):
        raise ValidationError(f"domain must be {FULL_LINE!r} or {POSITIVE_HALF_LINE!r}")
    profile = RiskProfile(domain, r, r_prime, lower_singularity=bool(lower_singularity),
                          kind="custom")
    validate_profile_grid(profile, working_interval, grid_points)
    return profile


# -- agent utilities and the harmonic representative -------------------------

@dataclass(frozen=True)
class AgentUtility:
    """One market participant's utility, given by its absolute risk aversion.

    kind 'exponential': rho(z) = alpha (constant), whole line.
    kind 'power':       rho(z) = eta / z, positive half line.
    kind 'custom':      caller-supplied rho > 0 with an explicit domain tag.
    """

    kind: Literal["exponential", "power", "custom"]
    alpha: float | None = None
    eta: float | None = None
    rho: Callable[[np.ndarray], np.ndarray] | None = None
    domain: str = field(default=FULL_LINE)

    def __post_init__(self):
        if self.kind == "exponential":
            if self.alpha is None or self.alpha <= 0:
                raise ValidationError("exponential utility requires alpha > 0")
            object.__setattr__(self, "domain", FULL_LINE)
        elif self.kind == "power":
            if self.eta is None or self.eta < 0:
                raise ValidationError("power utility requires eta >= 0")
            object.__setattr__(self, "domain", POSITIVE_HALF_LINE)
        elif self.kind == "custom":
            if self.rho is None:
                raise ValidationError("custom utility requires a rho callable")
            if self.domain not in (FULL_LINE, POSITIVE_HALF_LINE):
                raise ValidationError("custom utility needs a valid domain tag")
        else:
            raise ValidationError(f"unknown utility kind {self.kind!r}")

    def risk_aversion(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "exponential":
            return np.full_like(z, float(self.alpha))
        if self.kind == "power":
            return float(self.eta) / z
        return np.asarray(self.rho(z), dtype=float)

    def marginal_utility(self, z):
        """u'(z), normalized so constants cancel in likelihood ratios."""
        z = np.asarray(z, dtype=float)
        if self.kind == "exponential":
            return np.exp(-float(self.alpha) * z)
        if self.kind == "power":
            return z ** (-float(self.eta))
        raise ValidationError("marginal utility is undefined for custom aversion")


def exponential_utility(alpha: float) -> AgentUtility:
    return AgentUtility("exponential", alpha=float(alpha))


def power_utility(eta: float) -> AgentUtility:
    return AgentUtility("power", eta=float(eta))


def custom_utility(rho, domain: str = FULL_LINE) -> AgentUtility:
    return AgentUtility("custom", rho=rho, domain=domain)


def harmonic_aversion(utilities, wealths) -> float:
    """n * (sum_i 1/rho_i(y_i))^(-1): the representative absolute risk aversion.

    Equals the plain harmonic mean of the individual aversions evaluated at
    the given wealth levels.  Raises when any rho_i(y_i) fails to be positive.
    """
    utilities = list(utilities)
    y = np.asarray(wealths, dtype=float)
    if y.shape != (len(utilities),):
        raise ValidationError("need one wealth level per agent")
    inv = []
    for u, yi in zip(utilities, y):
        rho = float(np.asarray(u.risk_aversion(yi)))
        if not np.isfinite(rho) or rho <= 0:
            raise ValidationError(f"risk aversion must be positive, got {rho!r} at wealth {yi!r}")
        inv.append(1.0 / rho)
    return len(utilities) / float(np.sum(inv))
