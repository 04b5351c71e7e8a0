"""Equilibrium clearing prices for an externally liquidated claim.

The market prices a claim Z against aggregate holdings X through the fixed
point v = h(v), where h tilts the expectation of Z by exp(-r(X + Z - v)).
Equivalently, v is a root of

    theta(v) = E[(Z - v) * exp(-r(X + Z - v))],

which is the form the solver works with.  The paper-level facts the code
leans on: theta(ess inf Z) >= 0 always; on the whole line a root always
exists; on the positive half line existence can fail, in which case the
market only offers the liquidity-capped value ess inf(X + Z); several
sufficient conditions certify that at most one root exists.  `clear` selects
the minimal root (the one an ascending auction stops at) or the cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, DomainError, ValidationError
from .risk_profile import FULL_LINE, POSITIVE_HALF_LINE, RiskProfile
from .scenario import RandomVariable, ScenarioSpace, is_comonotonic

GRID_POINTS_DEFAULT = 2049
ROOT_TOL_DEFAULT = 1e-10
ATOM_MASS_THRESHOLD_DEFAULT = 1e-4
CERT_GRID_POINTS = 512

# existence labels on ClearingResult
FAIR_PRICE = "fair_price"
LIQUIDITY_CAPPED = "liquidity_capped"
FULL_LINE_EXISTENCE = "full_line"

# existence_diagnosis outcomes
FULL_LINE_GUARANTEED = "full_line_guaranteed"
BOUNDARY_OK = "boundary_ok"
BOUNDARY_FAILS = "boundary_fails"
SINGULAR_ATOM = "singular_atom"

# uniqueness certificates
COMONOTONE = "comonotone"
LINEAR_R = "linear_R"
MONOTONE_MAP = "monotone_map"
CONCAVE_MAP = "concave_map"

_CHUNK = 1 << 13
_MATRIX_BUDGET = 1 << 24


class ClearingProblem:
    """Claim Z, aggregate holdings X (one shared space), and a risk profile.

    Scenarios are stored in a canonical order (sorted by holdings, claim,
    weight) so every reduction is independent of how the caller happened to
    order the input: permuting scenarios leaves all outputs bitwise unchanged.
    """

    def __init__(self, x: RandomVariable, z: RandomVariable, profile: RiskProfile):
        if x.space is not z.space:
            raise ValidationError("X and Z must share one scenario space")
        self.space = x.space
        self.profile = profile
        order = np.lexsort((x.space.weights, z.values, x.values))
        self._w = x.space.weights[order]
        self._x = x.values[order]
        self._z = z.values[order]
        self._xz = self._x + self._z
        if profile.domain == POSITIVE_HALF_LINE and self._x.min() <= 0.0:
            raise ValidationError(
                "ess inf of the aggregate holdings must lie inside the positive half line"
            )

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def z(self) -> np.ndarray:
        return self._z

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @cached_property
    def ess_inf_z(self) -> float:
        return float(self._z.min())

    @cached_property
    def ess_sup_z(self) -> float:
        return float(self._z.max())

    @cached_property
    def ess_inf_xz(self) -> float:
        return float(self._xz.min())

    @cached_property
    def _linear_moments(self):
        # linear r: exp(-r(X+Z-v)) = exp(-r(X+Z)) * exp(alpha*v), so theta has
        # the sign of A - v*B with the tilt computed once
        r0 = np.asarray(self.profile.r(self._xz), dtype=float)
        m = float(r0.min())
        wexp = self._w * np.exp(-(r0 - m))
        return float(wexp @ self._z), float(wexp.sum()), m

    @cached_property
    def certificates(self) -> frozenset:
        return uniqueness_certificates(self)

    # -- feasibility -------------------------------------------------------

    def _check_feasible(self, v: float) -> np.ndarray:
        gap = self._xz - v
        if self.profile.domain == POSITIVE_HALF_LINE:
            bad = np.where(gap <= 0.0)[0]
            if bad.size:
                i = int(bad[0])
                raise DomainError(
                    f"candidate price {v!r} leaves the domain: scenario with "
                    f"X={self._x[i]!r}, Z={self._z[i]!r} gives X+Z-v={gap[i]!r} <= 0"
                )
        return gap

    # -- stabilized tilts ---------------------------------------------------

    def _tilt(self, v: float):
        """Weights w*exp(-(r(X+Z-v) - min r)); the dropped factor is positive."""
        gap = self._check_feasible(v)
        r = np.asarray(self.profile.r(gap), dtype=float)
        m = float(r.min())
        return self._w * np.exp(-(r - m)), m

    def _theta_scaled(self, v: float) -> float:
        """theta(v) up to a positive v-dependent factor (sign and zeros exact)."""
        if self.profile.is_linear:
            a, b, _ = self._linear_moments
            return a - v * b
        tilt, _ = self._tilt(v)
        return float(tilt @ (self._z - v))

    def _theta_grid_scaled(self, vs: np.ndarray) -> np.ndarray:
        if self.profile.is_linear:
            a, b, _ = self._linear_moments
            return a - vs * b
        n = self._xz.size
        g = vs.size
        if n * g <= _MATRIX_BUDGET:
            gap = self._xz[None, :] - vs[:, None]
            r = np.asarray(self.profile.r(gap), dtype=float)
            r -= r.min(axis=1, keepdims=True)
            return np.einsum("ij,ij,j->i", self._z[None, :] - vs[:, None], np.exp(-r), self._w)
        # two passes, chunked over scenarios: first the per-v stabilizer,
        # then the accumulation
        minr = np.full(g, np.inf)
        for lo in range(0, n, _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            r = np.asarray(self.profile.r(self._xz[sl][None, :] - vs[:, None]), dtype=float)
            np.minimum(minr, r.min(axis=1), out=minr)
        acc = np.zeros(g)
        for lo in range(0, n, _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            r = np.asarray(self.profile.r(self._xz[sl][None, :] - vs[:, None]), dtype=float)
            r -= minr[:, None]
            acc += np.einsum("ij,ij,j->i", self._z[sl][None, :] - vs[:, None],
                             np.exp(-r), self._w[sl])
        return acc


def h_map(problem: ClearingProblem, v: float) -> float:
    """Tilted expectation of the claim at candidate price v.

    Always lies in [ess inf Z, ess sup Z]; a fixed point h(v) = v is a
    clearing price.  Raises DomainError (naming the scenario) when X+Z-v
    leaves the profile domain.
    """
    tilt, _ = problem._tilt(float(v))
    return float((tilt @ problem.z) / tilt.sum())


def theta(problem: ClearingProblem, v: float) -> float:
    """E[(Z - v) exp(-r(X + Z - v))]; zero exactly at the clearing prices."""
    v = float(v)
    if problem.profile.is_linear:
        a, b, m = problem._linear_moments
        # restore the exact factor split off by the linear shortcut
        with np.errstate(over="ignore"):
            return float((a - v * b) * np.exp(problem.profile.alpha * v - m))
    tilt, m = problem._tilt(v)
    with np.errstate(over="ignore"):
        return float((tilt @ (problem.z - v)) * np.exp(-m))


def _scan_bounds(problem: ClearingProblem):
    lo = problem.ess_inf_z
    if problem.profile.domain == FULL_LINE:
        return lo, problem.ess_sup_z
    b = problem.ess_inf_xz
    guard = 1e-9 * max(1.0, abs(b))
    return lo, min(problem.ess_sup_z, b - guard)


def _bisect(problem: ClearingProblem, a: float, fa: float, b: float, fb: float,
            width: float) -> float:
    while (b - a) > width:
        mid = 0.5 * (a + b)
        fm = problem._theta_scaled(mid)
        if fm == 0.0:
            return mid
        if (fa > 0) != (fm > 0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def find_all_roots(problem: ClearingProblem, grid_points: int = GRID_POINTS_DEFAULT,
                   tol: float = ROOT_TOL_DEFAULT):
    """All fixed points of the pricing map, by grid scan plus bisection.

    Scans theta on [ess inf Z, upper] where upper is ess sup Z on the whole
    line and min(ess sup Z, ess inf(X+Z) - guard) on the positive half line
    (the guard keeps the tilt off the singular boundary).  Every strict sign
    change is bisected down to width tol * max(1, |upper|); an exact zero at a
    grid point, including the upper bound, counts as a root there.  Distinct
    roots closer than one grid cell may merge; the cell width is reported as
    the scan's resolution.  An empty list is a valid outcome on the positive
    half line.
    """
    if grid_points < 3:
        raise ValidationError("grid_points must be at least 3")
    lo, hi = _scan_bounds(problem)
    if hi < lo:
        return []
    if hi == lo:
        return [lo] if problem._theta_scaled(lo) == 0.0 else []
    grid = np.linspace(lo, hi, int(grid_points))
    th = problem._theta_grid_scaled(grid)
    width = tol * max(1.0, abs(hi))
    cell = (hi - lo) / (grid_points - 1)

    roots = [float(grid[i]) for i in np.where(th == 0.0)[0]]
    pos = th > 0
    change = np.where((th[:-1] != 0.0) & (th[1:] != 0.0) & (pos[:-1] != pos[1:]))[0]
    for i in change:
        roots.append(_bisect(problem, float(grid[i]), float(th[i]),
                             float(grid[i + 1]), float(th[i + 1]), width))
    roots.sort()
    merged = []
    for r in roots:
        if merged and (r - merged[-1]) < cell:
            continue
        merged.append(r)
    return merged


def existence_diagnosis(problem: ClearingProblem,
                        atom_mass_threshold: float = ATOM_MASS_THRESHOLD_DEFAULT) -> str:
    """Classify whether a fair clearing price exists.

    Whole-line profiles always admit one.  On the positive half line the
    boundary test is h(ess inf(X+Z)) <= ess inf(X+Z).  Two refinements make
    that test meaningful on finite spaces:

    * a genuine atom of X+Z at its infimum combined with a singular profile
      guarantees existence outright (`singular_atom`), but only atoms of
      material mass (>= atom_mass_threshold) are treated as structural;
    * scenarios sitting exactly at the infimum are excluded from the boundary
      evaluation when the profile is singular there (a principal-value
      reading of the boundary limit).  A discretized atomless law always
      carries one minimal sample whose diverging tilt would otherwise drown
      the boundary test and report every claim as priceable.
    """
    if problem.profile.domain == FULL_LINE:
        return FULL_LINE_GUARANTEED
    b = problem.ess_inf_xz
    gap = problem._xz - b
    atom = gap <= 1e-12 * max(1.0, abs(b))
    if problem.profile.lower_singularity:
        if float(problem.weights[atom].sum()) >= atom_mass_threshold:
            return SINGULAR_ATOM
        keep = ~atom
        if not np.any(keep):
            return SINGULAR_ATOM
    else:
        keep = np.ones_like(atom)
    r = np.asarray(problem.profile.r(gap[keep]), dtype=float)
    r -= r.min()
    tilt = problem.weights[keep] * np.exp(-r)
    h_b = float((tilt @ problem.z[keep]) / tilt.sum())
    return BOUNDARY_OK if h_b <= b else BOUNDARY_FAILS


def uniqueness_certificates(problem: ClearingProblem,
                            z_grid_points: int = CERT_GRID_POINTS) -> frozenset:
    """Sufficient conditions (each certifies at most one clearing price).

    comonotone   Z and X+Z move together across all scenario pairs.
    linear_R     the profile tilt is linear.
    monotone_map z * exp(-r(X + z)) nondecreasing in z >= 0 for every
                 scenario; since r' is nonincreasing it suffices to check
                 z * r'(ess inf X + z) <= 1 on the z-grid.
    concave_map  the same map concave in z, checked through second
                 differences per distinct holdings value.

    The map conditions are grid-certified on z in [0, ess sup Z - ess inf Z]:
    necessary on the grid, not a proof.
    """
    certs = set()
    # comonotonicity of (Z, X+Z) on the canonical arrays
    order = np.lexsort((problem._xz, problem._z))
    if bool(np.all(np.diff(problem._xz[order]) >= 0)):
        certs.add(COMONOTONE)
    if problem.profile.is_linear:
        certs.add(LINEAR_R)

    zmax = problem.ess_sup_z - problem.ess_inf_z
    zg = np.linspace(0.0, zmax, z_grid_points) if zmax > 0 else np.array([0.0])
    x_min = float(problem._x.min())
    rp = np.asarray(problem.profile.r_prime(x_min + zg), dtype=float)
    if bool(np.all(zg * rp <= 1.0 + 1e-12)):
        certs.add(MONOTONE_MAP)

    concave = True
    if zmax > 0:
        uniq = np.unique(problem._x)
        for lo in range(0, uniq.size, _CHUNK):
            xs = uniq[lo:lo + _CHUNK]
            r = np.asarray(problem.profile.r(xs[:, None] + zg[None, :]), dtype=float)
            r -= np.asarray(problem.profile.r(xs), dtype=float)[:, None]
            g = zg[None, :] * np.exp(-r)
            d2 = g[:, 2:] - 2.0 * g[:, 1:-1] + g[:, :-2]
            tol = 1e-11 * max(1.0, float(np.abs(g).max()))
            if np.any(d2 > tol):
                concave = False
                break
    if concave:
        certs.add(CONCAVE_MAP)
    return frozenset(certs)


@dataclass(frozen=True)
class ClearingResult:
    """Output of `clear`: all fixed points plus the selected market price.

    `selected` is the minimal root when any exists and the liquidity cap
    ess inf(X+Z) otherwise (positive half line only).  `existence` records
    which branch fired; `diagnosis` is the boundary classification;
    `uniqueness_certificates` lists the grid-certified conditions that held.
    """

    roots: tuple
    selected: float
    existence: str
    diagnosis: str
    uniqueness_certificates: frozenset
    bracket_resolution: float


def clear(problem: ClearingProblem, grid_points: int = GRID_POINTS_DEFAULT,
          tol: float = ROOT_TOL_DEFAULT) -> ClearingResult:
    """Solve the pricing fixed point and select the market price."""
    lo, hi = _scan_bounds(problem)
    roots = find_all_roots(problem, grid_points=grid_points, tol=tol)
    resolution = (hi - lo) / (grid_points - 1) if hi > lo else 0.0
    if roots:
        selected = roots[0]
        existence = FULL_LINE_EXISTENCE if problem.profile.domain == FULL_LINE else FAIR_PRICE
    else:
        if problem.profile.domain == FULL_LINE:
            raise ConvergenceError(
                "no sign change found although a fixed point is guaranteed; "
                "increase grid_points"
            )
        selected = problem.ess_inf_xz
        existence = LIQUIDITY_CAPPED
    return ClearingResult(
        roots=tuple(roots),
        selected=float(selected),
        existence=existence,
        diagnosis=existence_diagnosis(problem),
        uniqueness_certificates=problem.certificates,
        bracket_resolution=float(resolution),
    )


# -- systemic-ruin limit ------------------------------------------------------

def bernoulli_ruin_product(problem: ClearingProblem, p: float) -> ClearingProblem:
    """Product with an independent survival flag of probability p.

    On the ruin branch both the claim and the holdings collapse to their
    essential infima; on the survival branch they are unchanged.  The product
    space is built explicitly (twice the scenario count), keeping the limit
    computation exact: p is a parameter, never sampled.
    """
    if not 0.0 < p < 1.0:
        raise ValidationError("p must lie strictly in (0, 1)")
    w = problem.weights
    space = ScenarioSpace(np.concatenate([w * p, w * (1.0 - p)]))
    x = np.concatenate([problem.x, np.full(w.size, problem.x.min())])
    z = np.concatenate([problem.z, np.full(w.size, problem.z.min())])
    return ClearingProblem(RandomVariable(space, x), RandomVariable(space, z),
                           problem.profile)


def ruin_limit_price(problem: ClearingProblem, p_sequence,
                     grid_points: int = GRID_POINTS_DEFAULT,
                     tol: float = ROOT_TOL_DEFAULT):
    """Clearing prices along a sequence of survival probabilities p -> 1.

    Requires a singular positive-half-line profile, at least one uniqueness
    certificate, and the joint worst case ess inf(X+Z) = ess inf X + ess inf Z.
    Under those conditions the sequence is nondecreasing and converges to the
    extended market price of the undisturbed problem.
    """
    ps = [float(p) for p in p_sequence]
    if any(not 0.0 < p < 1.0 for p in ps):
        raise ValidationError("every p must lie strictly in (0, 1)")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValidationError("p_sequence must be strictly increasing")
    if problem.profile.domain != POSITIVE_HALF_LINE or not problem.profile.lower_singularity:
        raise ValidationError("ruin limit needs a singular positive-half-line profile")
    if not problem.certificates:
        raise ValidationError("ruin limit needs at least one uniqueness certificate")
    b = problem.ess_inf_xz
    joint = problem.x.min() + problem.z.min()
    if abs(b - joint) > 1e-12 * max(1.0, abs(b)):
        raise ValidationError(
            "joint worst-case condition ess inf(X+Z) = ess inf X + ess inf Z fails"
        )
    return [clear(bernoulli_ruin_product(problem, p),
                  grid_points=grid_points, tol=tol).selected for p in ps]
