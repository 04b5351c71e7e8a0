"""Finite probability spaces and the random variables that live on them.

Everything downstream (clearing prices, demand curves, the multi-agent
equilibrium) works on a finite scenario space: a vector of strictly positive
weights summing to one, plus payoff vectors aligned to it.  Continuous laws
enter through seeded sampling (`sample`) which discretizes them onto a
uniform-weight space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ValidationError

WEIGHT_SUM_TOL = 1e-12


class ScenarioSpace:
    """Finite probability space: strictly positive weights summing to one.

    Zero-probability scenarios are dropped at construction, so essential
    bounds on any aligned variable are plain min/max.  Weights whose sum is
    off by more than 1e-12 (absolute) are rejected, never renormalized.
    """

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValidationError("weights must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        w = w[w > 0.0]
        if w.size == 0:
            raise ValidationError("all weights are zero")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(
                f"weights sum to {total!r}, off by {abs(total - 1.0):.3e} "
                f"(> {WEIGHT_SUM_TOL} absolute); renormalize explicitly if intended"
            )
        w.setflags(write=False)
        self.weights = w

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def constant(self, value: float) -> "RandomVariable":
        """Deterministic payoff on this space."""
        return RandomVariable(self, np.full(self.size, float(value)))

    def variable(self, values) -> "RandomVariable":
        return RandomVariable(self, values)

    def __repr__(self):
        return f"ScenarioSpace(size={self.size})"


class RandomVariable:
    """Real payoff vector aligned to a ScenarioSpace.

    Supports the arithmetic needed to assemble claims (X + s*q, Z - v, ...).
    Mixed-space arithmetic is rejected: combine variables only when they were
    built on the same space object.
    """

    __slots__ = ("space", "values")

    def __init__(self, space: ScenarioSpace, values):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size != space.size:
            raise ValidationError(
                f"values length {v.size} does not match scenario count {space.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValidationError("values must be finite")
        v = v.copy()
        v.setflags(write=False)
        self.space = space
        self.values = v

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, RandomVariable):
            if other.space is not self.space:
                raise ValidationError("random variables live on different scenario spaces")
            return other.values
        return float(other)

    def __add__(self, other):
        return RandomVariable(self.space, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RandomVariable(self.space, self.values - self._coerce(other))

    def __rsub__(self, other):
        return RandomVariable(self.space, self._coerce(other) - self.values)

    def __mul__(self, other):
        return RandomVariable(self.space, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return RandomVariable(self.space, -self.values)

    def __repr__(self):
        return f"RandomVariable(n={self.values.size}, range=[{self.values.min()}, {self.values.max()}])"


def expectation(rv: RandomVariable) -> float:
    """Weighted mean over scenarios."""
    return float(np.dot(rv.space.weights, rv.values))


def ess_inf(rv: RandomVariable) -> float:
    """Essential infimum; plain minimum since every scenario has positive weight."""
    return float(rv.values.min())


def ess_sup(rv: RandomVariable) -> float:
    return float(rv.values.max())


def variance(rv: RandomVariable) -> float:
    m = expectation(rv)
    return float(np.dot(rv.space.weights, (rv.values - m) ** 2))


def is_comonotonic(a: RandomVariable, b: RandomVariable) -> bool:
    """True iff (a(w)-a(w'))*(b(w)-b(w')) >= 0 for every scenario pair.

    Checked in O(n log n): sort pairs lexicographically by (a, b); the pair is
    comonotone exactly when b is nondecreasing along that order.
    """
    if a.space is not b.space:
        raise ValidationError("comonotonicity requires variables on one scenario space")
    order = np.lexsort((b.values, a.values))
    bs = b.values[order]
    return bool(np.all(np.diff(bs) >= 0))


# -- seeded sampling of named laws ----------------------------------------

_LAW_PARAMS = {
    "normal": ("mu", "cov"),
    "lognormal": ("mu", "sigma2"),
    "gamma": ("k", "theta"),
    "poisson": ("lam",),
    "bernoulli": ("p",),
    "discrete": ("support", "probabilities"),
}


@dataclass(frozen=True)
class SamplingConfig:
    """Named continuous/discrete law, sample count, and mandatory seed."""

    law: str
    params: Mapping[str, object] = field(default_factory=dict)
    sample_count: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.law not in _LAW_PARAMS:
            raise ValidationError(f"unknown law {self.law!r}; expected one of {sorted(_LAW_PARAMS)}")
        if int(self.sample_count) < 2:
            raise ValidationError("sample_count must be at least 2")
        missing = [k for k in _LAW_PARAMS[self.law] if k not in self.params]
        if missing:
            raise ValidationError(f"law {self.law!r} missing parameters {missing}")


def sample(config: SamplingConfig):
    """Draw a uniform-weight scenario space from the configured law.

    Deterministic given the seed.  A multivariate normal (matrix covariance)
    returns one RandomVariable per component, all sharing a single space.
    """
    rng = np.random.default_rng(int(config.seed))
    n = int(config.sample_count)
    p = config.params
    law = config.law

    if law == "normal":
        mu = np.atleast_1d(np.asarray(p["mu"], dtype=float))
        cov = np.asarray(p["cov"], dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.shape != (mu.size, mu.size):
            raise ValidationError("covariance shape does not match mean vector")
        if np.min(np.linalg.eigvalsh((cov + cov.T) / 2.0)) < -1e-10 * max(1.0, np.abs(cov).max()):
            raise ValidationError("covariance matrix must be positive semidefinite")
        draws = rng.multivariate_normal(mu, cov, size=n, method="svd")
        space = ScenarioSpace(np.full(n, 1.0 / n))
        rvs = [RandomVariable(space, draws[:, j]) for j in range(mu.size)]
        return rvs[0] if mu.size == 1 else rvs

    if law == "lognormal":
        sigma2 = float(p["sigma2"])
        if sigma2 <= 0:
            raise ValidationError("sigma2 must be positive")
        vals = rng.lognormal(mean=float(p["mu"]), sigma=np.sqrt(sigma2), size=n)
    elif law == "gamma":
        k, theta = float(p["k"]), float(p["theta"])
        if k <= 0 or theta <= 0:
            raise ValidationError("gamma requires k > 0 and theta > 0")
        vals = rng.gamma(shape=k, scale=theta, size=n)
    elif law == "poisson":
        lam = float(p["lam"])
        if lam <= 0:
            raise ValidationError("poisson requires lam > 0")
        vals = rng.poisson(lam=lam, size=n).astype(float)
    elif law == "bernoulli":
        prob = float(p["p"])
        if not 0.0 <= prob <= 1.0:
            raise ValidationError("bernoulli requires p in [0, 1]")
        vals = (rng.random(n) < prob).astype(float)
    elif law == "discrete":
        support = np.asarray(p["support"], dtype=float)
        probs = np.asarray(p["probabilities"], dtype=float)
        if support.ndim != 1 or support.shape != probs.shape:
            raise ValidationError("discrete law needs matching support/probabilities vectors")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValidationError("discrete probabilities must be nonnegative and sum to 1")
        vals = rng.choice(support, size=n, p=probs / probs.sum())
    else:  # pragma: no cover - guarded by SamplingConfig
        raise ValidationError(f"unknown law {law!r}")

    space = ScenarioSpace(np.full(n, 1.0 / n))
    return RandomVariable(space, vals)


def mix_with_floor(rv: RandomVariable, floor: float, floor_mass: float) -> RandomVariable:
    """Regularize a sampled nonnegative claim with an explicit worst-case state.

    Returns the claim on a new space with one extra scenario of mass
    ``floor_mass`` where the payoff equals ``floor`` (the law's own infimum for
    sampled continuous laws); the original scenarios keep their relative
    weights scaled by ``1 - floor_mass``.  On a finite sample the minimum draw
    overstates the essential infimum of the underlying law; anchoring the true
    floor restores boundary behavior (and is the systemic-ruin construction
    used to regularize pricing near singular domains).
    """
    if not 0.0 < floor_mass < 1.0:
        raise ValidationError("floor_mass must lie strictly in (0, 1)")
    if floor > ess_inf(rv):
        raise ValidationError("floor must not exceed the sampled minimum")
    w = np.concatenate([[floor_mass], rv.space.weights * (1.0 - floor_mass)])
    vals = np.concatenate([[floor], rv.values])
    # re-express so the sum is exactly 1 within tolerance
    space = ScenarioSpace(w / w.sum() if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL else w)
    return RandomVariable(space, vals)


# -- JSON scenario files ----------------------------------------------------

def load_scenario_json(path_or_obj):
    """Load ``{"weights": [...], "variables": {name: [...]}}``.

    All arrays must be equal length.  Zero-weight scenarios are dropped
    jointly from the weights and every variable.  Returns
    ``(space, {name: RandomVariable})``.
    """
    if isinstance(path_or_obj, (str, bytes)) or hasattr(path_or_obj, "read"):
        if hasattr(path_or_obj, "read"):
            doc = json.load(path_or_obj)
        else:
            with open(path_or_obj, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
    else:
        doc = path_or_obj
    if not isinstance(doc, dict) or "weights" not in doc:
        raise ValidationError("scenario file must be an object with a 'weights' array")
    w = np.asarray(doc["weights"], dtype=float)
    variables = doc.get("variables", {})
    if not isinstance(variables, dict):
        raise ValidationError("'variables' must map names to arrays")
    keep = w > 0.0
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    space = ScenarioSpace(w[keep])
    out = {}
    for name, vals in variables.items():
        arr = np.asarray(vals, dtype=float)
        if arr.shape != w.shape:
            raise ValidationError(
                f"variable {name!r} has length {arr.size}, expected {w.size}"
            )
        out[name] = RandomVariable(space, arr[keep])
    return space, out
