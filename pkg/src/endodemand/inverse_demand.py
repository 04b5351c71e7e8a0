"""Endogenous inverse demand functions for proportional liquidation.

Selling s units of a portfolio q into the market realizes the claim s*q, so
the total proceeds are the clearing value of that claim.  Two curves describe
the proceeds: the order-book density f (price of the next marginal unit,
computed from the closed derivative formula at the solved price rather than by
differencing), and the volume-weighted average price f_bar (proceeds per unit,
the clearing value divided by s).  They are tied together by
s * f_bar(s) = integral of f over [0, s].

Out-of-domain liquidations (possible only on the positive half line) are
detected through the existence diagnosis and priced at the liquidity cap, so
f collapses to ess inf q and f_bar to the capped value divided by s.  For
multi-asset liquidation the same machinery prices the scalar claim s'q per
grid node and reports per-asset marginal/average curves, which generally show
cross-impacts even for independent payoffs.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .clearing import (
    BOUNDARY_FAILS,
    ClearingProblem,
    GRID_POINTS_DEFAULT,
    ROOT_TOL_DEFAULT,
    clear,
    existence_diagnosis,
)
from .errors import ValidationError
from .risk_profile import FULL_LINE, POSITIVE_HALF_LINE, RiskProfile
from .scenario import RandomVariable, ess_inf

DOM_BOUNDARY_REL_WIDTH = 1e-6


def _thread_count() -> int:
    raw = os.environ.get("ENDODEMAND_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_nodes(fn, items):
    """Map preserving order; threads only when ENDODEMAND_THREADS asks for them."""
    workers = _thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class LiquidationProblem:
    """Portfolio q liquidated proportionally into holdings X under a profile.

    Requires the joint worst-case condition ess inf(X+q) = ess inf X +
    ess inf q (both hit bottom in a common scenario); it then holds for s*q at
    every s >= 0.
    """

    def __init__(self, x: RandomVariable, q: RandomVariable, profile: RiskProfile):
        if x.space is not q.space:
            raise ValidationError("X and q must share one scenario space")
        self.x = x
        self.q = q
        self.profile = profile
        b = float((x.values + q.values).min())
        joint = float(x.values.min() + q.values.min())
        if abs(b - joint) > 1e-12 * max(1.0, abs(b)):
            raise ValidationError(
                "joint worst-case condition ess inf(X+q) = ess inf X + ess inf q fails"
            )

    def clearing_problem(self, s: float) -> ClearingProblem:
        return ClearingProblem(self.x, self.q * float(s), self.profile)


@dataclass(frozen=True)
class _Node:
    s: tuple
    f: tuple
    f_bar: tuple
    in_domain: bool
    selected: float


def _evaluate_node(x: RandomVariable, qs, profile: RiskProfile, s_vec,
                   grid_points: int, tol: float) -> _Node:
    s_vec = tuple(float(s) for s in s_vec)
    if any(s < 0 for s in s_vec):
        raise ValidationError("liquidated quantities must be nonnegative")
    m = len(qs)
    zv = np.zeros(x.values.size)
    for s, q in zip(s_vec, qs):
        zv = zv + s * q.values
    z = RandomVariable(x.space, zv)
    b = float((x.values + zv).min())
    joint = float(x.values.min() + sum(s * q.values.min() for s, q in zip(s_vec, qs)))
    if abs(b - joint) > 1e-12 * max(1.0, abs(b)):
        raise ValidationError(
            f"joint worst-case condition fails at s = {s_vec}"
        )
    problem = ClearingProblem(x, z, profile)

    in_domain = True
    if profile.domain == POSITIVE_HALF_LINE:
        in_domain = existence_diagnosis(problem) != BOUNDARY_FAILS
    if not in_domain:
        s_sq = sum(s * s for s in s_vec)
        if m == 1:
            f_bar = (b / s_vec[0],)
        else:
            f_bar = tuple(float(q.values.min()) + float(x.values.min()) * s / s_sq
                          for s, q in zip(s_vec, qs))
        f = tuple(float(q.values.min()) for q in qs)
        return _Node(s=s_vec, f=f, f_bar=f_bar, in_domain=False, selected=b)

    res = clear(problem, grid_points=grid_points, tol=tol)
    v = res.selected
    gap = x.values + zv - v
    r = np.asarray(profile.r(gap), dtype=float)
    tilt = x.space.weights * np.exp(-(r - r.min()))
    tilt_sum = float(tilt.sum())
    lever = 1.0 - (zv - v) * np.asarray(profile.r_prime(gap), dtype=float)
    den = float(tilt @ lever)
    if den <= 0.0:
        raise ValidationError(
            "order-book density denominator is not positive at s = "
            f"{s_vec}; no uniqueness certificate applies to this fixture"
        )
    f = tuple(float((tilt * lever) @ q.values) / den for q in qs)
    if m == 1 and s_vec[0] > 0:
        # single asset: the average price is exactly the cleared value per unit
        f_bar = (v / s_vec[0],)
    else:
        f_bar = tuple(float(tilt @ q.values) / tilt_sum for q in qs)
    return _Node(s=s_vec, f=f, f_bar=f_bar, in_domain=True, selected=float(v))


def vwap(problem: LiquidationProblem, s: float,
         grid_points: int = GRID_POINTS_DEFAULT, tol: float = ROOT_TOL_DEFAULT) -> float:
    """Average price per unit when s units are sold.

    s = 0 returns the tilted expectation of q (the price of the first
    marginal unit); s > 0 returns the clearing value of s*q divided by s, or
    the liquidity cap divided by s when the diagnosis reports the claim
    unpriceable.
    """
    node = _evaluate_node(problem.x, [problem.q], problem.profile, (float(s),),
                          grid_points, tol)
    return node.f_bar[0]


def order_book_density(problem: LiquidationProblem, s: float,
                       grid_points: int = GRID_POINTS_DEFAULT,
                       tol: float = ROOT_TOL_DEFAULT) -> float:
    """Price of the next marginal unit after s units have been sold.

    Valid under a uniqueness certificate (checked); out-of-domain s returns
    ess inf q.  The value is the closed tilted ratio at the solved price,
    weighting scenarios by (1 - [sq - v] r'(X + sq - v)) on top of the
    pricing tilt.
    """
    cp = problem.clearing_problem(s)
    if not cp.certificates:
        raise ValidationError(
            "order-book density requires a uniqueness certificate, none holds"
        )
    node = _evaluate_node(problem.x, [problem.q], problem.profile, (float(s),),
                          grid_points, tol)
    return node.f[0]


@dataclass(frozen=True)
class DemandCurve:
    """Both curves tabulated on an s-grid, plus the detected domain boundary.

    dom_boundary is the first s at which the existence diagnosis flips to
    failure (None when no flip occurs on the grid range or the profile lives
    on the whole line).
    """

    s_grid: np.ndarray
    f: np.ndarray
    f_bar: np.ndarray
    in_domain: np.ndarray
    dom_boundary: float | None


def locate_dom_boundary(problem: LiquidationProblem, s_max: float,
                        rel_width: float = DOM_BOUNDARY_REL_WIDTH) -> float | None:
    """Bisect the diagnosis transition on (0, s_max]; None when none exists."""
    if problem.profile.domain == FULL_LINE:
        return None

    def ok(s: float) -> bool:
        cp = problem.clearing_problem(s)
        return existence_diagnosis(cp) != BOUNDARY_FAILS

    if ok(float(s_max)):
        return None
    lo, hi = 0.0, float(s_max)
    while (hi - lo) > rel_width * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def demand_curve(problem: LiquidationProblem, s_max: float, n_points: int,
                 grid_points: int = GRID_POINTS_DEFAULT,
                 tol: float = ROOT_TOL_DEFAULT) -> DemandCurve:
    """Evaluate f and f_bar on a uniform grid over [0, s_max]."""
    if n_points < 2:
        raise ValidationError("n_points must be at least 2")
    if s_max <= 0:
        raise ValidationError("s_max must be positive")
    sg = np.linspace(0.0, float(s_max), int(n_points))
    nodes = _map_nodes(
        lambda s: _evaluate_node(problem.x, [problem.q], problem.profile, (s,),
                                 grid_points, tol),
        list(sg),
    )
    return DemandCurve(
        s_grid=sg,
        f=np.array([n.f[0] for n in nodes]),
        f_bar=np.array([n.f_bar[0] for n in nodes]),
        in_domain=np.array([n.in_domain for n in nodes], dtype=bool),
        dom_boundary=locate_dom_boundary(problem, s_max),
    )


def liquidity_at_zero(problem: LiquidationProblem):
    """Slopes of both curves at zero liquidation, in closed form.

    Under the pricing tilt at s = 0 (normalized weights proportional to
    exp(-r(X))), the marginal-curve slope is

        -2 E~[q^2 r'(X)] + 4 E~[q] E~[q r'(X)] - 2 E~[q]^2 E~[r'(X)]

    and the average-curve slope is half of it.  With deterministic holdings
    this reduces to -2 r'(X) Var(q): the first unit sold moves the price down
    in proportion to the representative risk aversion and the payoff variance.
    """
    x = problem.x.values
    q = problem.q.values
    w = problem.x.space.weights
    r = np.asarray(problem.profile.r(x), dtype=float)
    rp = np.asarray(problem.profile.r_prime(x), dtype=float)
    tilt = w * np.exp(-(r - r.min()))
    tilt = tilt / tilt.sum()
    eq = float(tilt @ q)
    t1 = float(tilt @ (q * q * rp))
    t2 = eq * float(tilt @ (q * rp))
    t3 = eq * eq * float(tilt @ rp)
    f_slope = -2.0 * t1 + 4.0 * t2 - 2.0 * t3
    return f_slope, 0.5 * f_slope


@dataclass(frozen=True)
class CrossImpactGrid:
    """Per-asset curves over the Cartesian product of per-asset s-grids.

    f and f_bar have shape grid_shape + (n_assets,); in_domain and selected
    have shape grid_shape.
    """

    s_grids: tuple
    f: np.ndarray
    f_bar: np.ndarray
    in_domain: np.ndarray
    selected: np.ndarray

    def iter_rows(self):
        """Yield (s_vec, asset_index, f, f_bar, in_domain) in grid order."""
        shape = self.in_domain.shape
        m = self.f.shape[-1]
        for idx in itertools.product(*(range(n) for n in shape)):
            s_vec = tuple(float(g[i]) for g, i in zip(self.s_grids, idx))
            for k in range(m):
                yield s_vec, k, float(self.f[idx + (k,)]), float(self.f_bar[idx + (k,)]), bool(self.in_domain[idx])


def cross_impact_grid(x: RandomVariable, qs, profile: RiskProfile, s_grids,
                      grid_points: int = GRID_POINTS_DEFAULT,
                      tol: float = ROOT_TOL_DEFAULT) -> CrossImpactGrid:
    """Price the scalar claim s'q at every node of the Cartesian s-grid."""
    qs = list(qs)
    if not qs:
        raise ValidationError("need at least one asset")
    for q in qs:
        if q.space is not x.space:
            raise ValidationError("all assets must share the holdings' scenario space")
    grids = tuple(np.asarray(g, dtype=float) for g in s_grids)
    if len(grids) != len(qs):
        raise ValidationError("need one s-grid per asset")
    shape = tuple(g.size for g in grids)
    m = len(qs)
    combos = list(itertools.product(*grids))
    nodes = _map_nodes(
        lambda sv: _evaluate_node(x, qs, profile, sv, grid_points, tol), combos
    )
    f = np.array([n.f for n in nodes]).reshape(shape + (m,))
    f_bar = np.array([n.f_bar for n in nodes]).reshape(shape + (m,))
    in_dom = np.array([n.in_domain for n in nodes], dtype=bool).reshape(shape)
    sel = np.array([n.selected for n in nodes]).reshape(shape)
    return CrossImpactGrid(s_grids=grids, f=f, f_bar=f_bar, in_domain=in_dom,
                           selected=sel)
