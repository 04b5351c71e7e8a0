"""Full n-agent risk-sharing equilibrium for an externally sold claim.

Each agent trades a payoff so that, at the equilibrium pricing measure, her
expected utility is maximal and the trades sum to the liquidated claim Z.
The first-order conditions collapse the problem to a one-dimensional family:
every agent's equilibrium wealth depends on the state only through the
aggregate gamma = X_total + Z - price, via allocation functions solving

    y_i'(gamma) = (1 / rho_i(y_i)) / sum_j (1 / rho_j(y_j)),

with initial conditions pinned down by matching each agent's priced
endowment.  The pricing density is exp(-R(gamma)) normalized, where R
integrates the harmonic-mean risk aversion along the allocations.  The solver
nests three loops: price (outermost root find), initial conditions (damped
Newton shooting), allocation ODE (classical fourth-order Runge-Kutta,
stepped in log(gamma) on the positive half line so the singular edge is
resolved).  Exponential and symmetric power populations bypass the shooting
with exact allocations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, ValidationError
from .risk_profile import (
    FULL_LINE,
    POSITIVE_HALF_LINE,
    AgentUtility,
    RiskProfile,
)
from .scenario import RandomVariable

ODE_STEPS_DEFAULT = 10_000
CONSERVATION_TOL = 1e-9
SHOOTING_MAX_ITER = 200
OUTER_GRID_DEFAULT = 129
OUTER_TOL = 1e-10
RANGE_MARGIN = 0.05


@dataclass(frozen=True)
class Agent:
    utility: AgentUtility
    endowment: RandomVariable


class AgentPopulation:
    """Agents with one shared scenario space and a common utility domain.

    Admissibility: exponential (or Lipschitz-aversion custom) agents on the
    whole line, or power agents with eta in (0, 1] (so marginal revenue
    z*u'(z) is nondecreasing and the no-wealth behavior is singular) on the
    positive half line, with strictly positive endowments there.  Custom
    aversions cannot be verified mechanically; a grid Lipschitz estimate is
    taken and a warning issued instead of a rejection.
    """

    def __init__(self, agents):
        agents = list(agents)
        if not agents:
            raise ValidationError("population needs at least one agent")
        space = agents[0].endowment.space
        domains = set()
        for a in agents:
            if a.endowment.space is not space:
                raise ValidationError("all endowments must share one scenario space")
            domains.add(a.utility.domain)
        if len(domains) != 1:
            raise ValidationError("all agents must share one utility domain")
        self.domain = domains.pop()
        for i, a in enumerate(agents):
            u = a.utility
            if u.kind == "power":
                if not 0.0 < float(u.eta) <= 1.0:
                    raise ValidationError(
                        f"agent {i}: power utility needs eta in (0, 1] for a "
                        "well-posed equilibrium"
                    )
                if a.endowment.values.min() <= 0.0:
                    raise ValidationError(f"agent {i}: power utility needs a positive endowment")
            elif u.kind == "custom":
                self._warn_custom(i, u)
        self.agents = agents
        self.space = space
        xv = np.zeros(space.size)
        for a in agents:
            xv = xv + a.endowment.values
        self.aggregate = RandomVariable(space, xv)
        if self.domain == POSITIVE_HALF_LINE and self.aggregate.values.min() <= 0.0:
            raise ValidationError("aggregate endowment must stay positive on this domain")

    @staticmethod
    def _warn_custom(i, u):
        zg = np.linspace(0.5, 10.0, 64) if u.domain == POSITIVE_HALF_LINE \
            else np.linspace(-5.0, 5.0, 64)
        rho = np.asarray(u.risk_aversion(zg), dtype=float)
        if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
            raise ValidationError(f"agent {i}: custom risk aversion must be positive")
        lip = float(np.abs(np.diff(rho)).max() / (zg[1] - zg[0]))
        warnings.warn(
            f"agent {i}: custom risk aversion accepted on a grid Lipschitz "
            f"estimate ({lip:.3g}); admissibility is not machine-checkable",
            stacklevel=3,
        )

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def _fused(self):
        # kind-grouped index arrays so the ODE right-hand side is a few numpy
        # ops instead of one python call per agent per stage
        if not hasattr(self, "_fused_cache"):
            exp_idx, alphas, pow_idx, etas, custom = [], [], [], [], []
            for i, a in enumerate(self.agents):
                if a.utility.kind == "exponential":
                    exp_idx.append(i)
                    alphas.append(float(a.utility.alpha))
                elif a.utility.kind == "power":
                    pow_idx.append(i)
                    etas.append(float(a.utility.eta))
                else:
                    custom.append((i, a.utility.rho))
            self._fused_cache = (
                np.array(exp_idx, dtype=int), np.array(alphas),
                np.array(pow_idx, dtype=int), np.array(etas), custom,
            )
        return self._fused_cache

    def rho_vector(self, y: np.ndarray) -> np.ndarray:
        exp_idx, alphas, pow_idx, etas, custom = self._fused
        out = np.empty(self.n)
        if exp_idx.size:
            out[exp_idx] = alphas
        if pow_idx.size:
            out[pow_idx] = etas / y[pow_idx]
        for i, rho in custom:
            out[i] = float(np.asarray(rho(y[i])))
        return out


# -- allocation ODE -----------------------------------------------------------

@dataclass(frozen=True)
class AllocationTable:
    """Allocations tabulated on a gamma grid (log-spaced on the half line)."""

    gamma: np.ndarray
    y: np.ndarray  # (n_agents, len(gamma))
    log_spaced: bool

    def _coords(self, g):
        return np.log(g) if self.log_spaced else g

    def _check_range(self, g):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        lo, hi = self.gamma[0], self.gamma[-1]
        pad = 1e-12 * max(1.0, abs(lo), abs(hi))
        if g.min() < lo - pad or g.max() > hi + pad:
            raise ValidationError(
                f"gamma in [{g.min()}, {g.max()}] outside tabulated range [{lo}, {hi}]"
            )
        return g

    def at(self, g):
        """Allocation vector(s) at gamma, interpolated on the grid.

        On the half line the interpolation runs through the allocation shares
        y_i/gamma, whose node values sum to one; the interpolated allocations
        therefore sum to gamma exactly between nodes as well.
        """
        g = self._check_range(g)
        u = self._coords(g)
        ug = self._coords(self.gamma)
        if self.log_spaced:
            out = np.vstack([np.interp(u, ug, row / self.gamma) for row in self.y]) * g
        else:
            out = np.vstack([np.interp(u, ug, row) for row in self.y])
        return out[:, 0] if out.shape[1] == 1 else out

    def conservation_residual(self) -> float:
        span = max(1.0, float(self.gamma[-1] - self.gamma[0]))
        return float(np.abs(self.y.sum(axis=0) - self.gamma).max()) / span


def _rk4_path(population: AgentPopulation, y0: np.ndarray, coords: np.ndarray,
              log_spaced: bool):
    """Integrate the allocation system along a coordinate path from coords[0].

    In log coordinates the system is dy/du = gamma(u) * f(y).  Each step ends
    with a projection back onto the conservation manifold sum(y) = gamma; the
    size of the largest correction is returned as the integration drift so the
    caller can decide whether the step count was adequate.
    """
    n = population.n
    half_line = population.domain == POSITIVE_HALF_LINE
    out = np.empty((n, coords.size))
    y = np.array(y0, dtype=float)
    out[:, 0] = y
    drift = 0.0

    def f(c, y):
        inv = 1.0 / population.rho_vector(y)
        dy = inv / inv.sum()
        if log_spaced:
            dy = dy * np.exp(c)
        return dy

    for j in range(coords.size - 1):
        c0, c1 = coords[j], coords[j + 1]
        h = c1 - c0
        if half_line and np.any(y <= 0.0):
            g = np.exp(c0) if log_spaced else c0
            i = int(np.argmin(y))
            raise DomainError(
                f"allocation of agent {i} left the positive domain at gamma={g!r}"
            )
        k1 = f(c0, y)
        k2 = f(c0 + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(c0 + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(c1, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        gamma1 = np.exp(c1) if log_spaced else c1
        gap = gamma1 - float(y.sum())
        drift = max(drift, abs(gap))
        if log_spaced and float(y.sum()) > 0.0:
            y = y * (gamma1 / float(y.sum()))
        else:
            y = y + gap / n
        out[:, j + 1] = y
    return out, drift


def _grid_with_anchor(lo: float, hi: float, anchor: float, n_steps: int,
                      log_spaced: bool):
    """Coordinate grid over [lo, hi] containing the anchor exactly."""
    to = np.log if log_spaced else (lambda v: v)
    clo, chi, ca = to(lo), to(hi), to(anchor)
    span = chi - clo
    k_back = max(int(round(n_steps * (ca - clo) / span)), 1) if ca > clo else 0
    k_fwd = max(n_steps - k_back, 1) if chi > ca else 0
    back = np.linspace(ca, clo, k_back + 1) if k_back else np.array([ca])
    fwd = np.linspace(ca, chi, k_fwd + 1) if k_fwd else np.array([ca])
    return back, fwd


def integrate_allocations(population: AgentPopulation, initial, gamma_lo: float,
                          gamma_hi: float, anchor: float | None = None,
                          n_steps: int = ODE_STEPS_DEFAULT,
                          drift_tol: float = CONSERVATION_TOL) -> AllocationTable:
    """Solve the allocation system on [gamma_lo, gamma_hi].

    ``initial`` is the allocation vector at the anchor (default: the lower
    endpoint) and must sum to it.  Each step is projected back onto the
    conservation manifold, so sum(y) = gamma holds exactly at the nodes; the
    steps are doubled (up to three times) whenever the pre-projection drift
    exceeds ``drift_tol`` per unit length.
    """
    y0 = np.asarray(initial, dtype=float)
    if y0.shape != (population.n,):
        raise ValidationError("initial must supply one allocation per agent")
    lo, hi = float(gamma_lo), float(gamma_hi)
    if not lo < hi:
        raise ValidationError("gamma range must satisfy lo < hi")
    log_spaced = population.domain == POSITIVE_HALF_LINE
    if log_spaced and lo <= 0.0:
        raise ValidationError("gamma range must be positive on the half line")
    c = float(anchor) if anchor is not None else lo
    if not lo <= c <= hi:
        raise ValidationError("anchor must lie inside the gamma range")
    if abs(float(y0.sum()) - c) > 1e-9 * max(1.0, abs(c)):
        raise ValidationError("initial allocations must sum to the anchor gamma")

    steps = int(n_steps)
    unit = max(1.0, hi - lo)
    for _ in range(4):
        back, fwd = _grid_with_anchor(lo, hi, c, steps, log_spaced)
        yb, drift_b = _rk4_path(population, y0, back, log_spaced)
        yf, drift_f = _rk4_path(population, y0, fwd, log_spaced)
        coords = np.concatenate([back[::-1], fwd[1:]])
        y = np.concatenate([yb[:, ::-1], yf[:, 1:]], axis=1)
        gamma = np.exp(coords) if log_spaced else coords
        table = AllocationTable(gamma=gamma, y=y, log_spaced=log_spaced)
        drift = max(drift_b, drift_f) / unit
        if drift <= drift_tol:
            return table
        steps *= 2
    raise ConvergenceError(
        f"allocation integration drift {drift:.3e} did not reach {drift_tol} "
        "per unit length"
    )


# -- equilibrium solve --------------------------------------------------------

@dataclass(frozen=True)
class EquilibriumSolution:
    """Pricing measure, price, allocations, and individual transfers.

    The density integrates to one under the physical weights; transfers sum
    scenariowise to the liquidated claim; lambdas (summing to one) split the
    sale proceeds between the agents.
    """

    price: float
    density: RandomVariable
    allocation_table: AllocationTable
    transfers: list
    lambdas: tuple
    moment_residual: float
    analytic_kind: str | None = None
    _r_table: np.ndarray | None = field(default=None, repr=False)
    _rho_table: np.ndarray | None = field(default=None, repr=False)

    def allocations(self, gamma):
        return self.allocation_table.at(gamma)


def _rho_grid(population: AgentPopulation, table: AllocationTable) -> np.ndarray:
    inv = np.zeros(table.gamma.size)
    for i, a in enumerate(population.agents):
        rho = np.asarray(a.utility.risk_aversion(table.y[i]), dtype=float)
        if np.any(rho <= 0):
            raise ValidationError(f"agent {i}: risk aversion not positive along the table")
        inv += 1.0 / rho
    return population.n / inv


def _r_from_rho(table: AllocationTable, rho: np.ndarray, n: int,
                anchor: float) -> np.ndarray:
    """R(gamma) = (1/n) integral of rho from the anchor, trapezoid on the grid.

    On the half line the grid is log-spaced; integrating rho(gamma)*gamma in
    the log coordinate keeps the quadrature exact for the 1/gamma aversions.
    """
    if table.log_spaced:
        u = np.log(table.gamma)
        integrand = rho * table.gamma
    else:
        u = table.gamma
        integrand = rho
    seg = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(u)
    cum = np.concatenate([[0.0], np.cumsum(seg)]) / n
    at_anchor = np.interp(np.log(anchor) if table.log_spaced else anchor, u, cum)
    return cum - at_anchor


def _interp_table(table: AllocationTable, values: np.ndarray, g: np.ndarray) -> np.ndarray:
    u = np.log(g) if table.log_spaced else g
    ug = np.log(table.gamma) if table.log_spaced else table.gamma
    return np.interp(u, ug, values)


def _density_weights(w, r_at_gamma):
    tilt = np.exp(-(r_at_gamma - r_at_gamma.min()))
    phi = w * tilt
    return phi / phi.sum()


def _wide_gamma_range(population: AgentPopulation, z: RandomVariable):
    xz = population.aggregate.values + z.values
    z_lo, z_hi = float(z.values.min()), float(z.values.max())
    b = float(xz.min())
    anchor = float(population.aggregate.values.min())
    if population.domain == POSITIVE_HALF_LINE:
        v_hi = b - 1e-9 * max(1.0, abs(b))
    else:
        v_hi = z_hi
    g_lo = min(anchor, b - v_hi)
    g_hi = max(anchor, float(xz.max()) - z_lo)
    if population.domain == POSITIVE_HALF_LINE:
        g_lo = max(g_lo, 1e-10 * max(1.0, b))
        lo = g_lo * (g_lo / g_hi) ** RANGE_MARGIN
        hi = g_hi * (g_hi / g_lo) ** RANGE_MARGIN
    else:
        pad = RANGE_MARGIN * (g_hi - g_lo)
        lo, hi = g_lo - pad, g_hi + pad
    return lo, hi, anchor


def _scan_bounds_pop(population: AgentPopulation, z: RandomVariable):
    lo = float(z.values.min())
    xz = population.aggregate.values + z.values
    if population.domain == FULL_LINE:
        return lo, float(z.values.max())
    b = float(xz.min())
    return lo, min(float(z.values.max()), b - 1e-9 * max(1.0, abs(b)))


class _GeneralSolver:
    """Nested solver: price outermost, shooting inner, allocation ODE innermost.

    The price search runs the inner shooting on a coarsened step count (the
    root location needs signs, not high-order accuracy); the final solution is
    re-shot at the full step count.
    """

    def __init__(self, population, z, n_steps, fd_step=1e-6):
        self.pop = population
        self.z = z
        self.n_steps = n_steps
        self.search_steps = max(n_steps // 8, 1000)
        self.fd_step = fd_step
        self.lo, self.hi, self.anchor = _wide_gamma_range(population, z)
        self.w = population.space.weights
        self.xz = population.aggregate.values + z.values
        self.eq_x = [a.endowment.values for a in population.agents]
        self.y0 = None  # warm start across price candidates
        self._jac = None
        self._steps = self.search_steps

    def _initial_guess(self):
        shares = np.array([float(self.w @ xi) for xi in self.eq_x])
        shares = shares / shares.sum()
        return shares * self.anchor

    def _solve_table(self, y0):
        # drift tolerance scales with the step budget: the coarse search pass
        # only needs sign-level accuracy
        coarse = self._steps < self.n_steps
        return integrate_allocations(self.pop, y0, self.lo, self.hi,
                                     anchor=self.anchor, n_steps=self._steps,
                                     drift_tol=1e-5 if coarse else CONSERVATION_TOL)

    def _artifacts(self, y0, v):
        table = self._solve_table(y0)
        rho = _rho_grid(self.pop, table)
        r_tab = _r_from_rho(table, rho, self.pop.n, self.anchor)
        gamma_hat = self.xz - v
        r_hat = _interp_table(table, r_tab, gamma_hat)
        qw = _density_weights(self.w, r_hat)
        return table, rho, r_tab, gamma_hat, qw

    def _residual(self, y0_free, v):
        y0 = np.concatenate([y0_free, [self.anchor - y0_free.sum()]])
        if self.pop.domain == POSITIVE_HALF_LINE and np.any(y0 <= 0.0):
            raise DomainError("initial allocation left the positive domain")
        table, rho, r_tab, gamma_hat, qw = self._artifacts(y0, v)
        y_hat = np.atleast_2d(table.at(gamma_hat))
        res = np.empty(self.pop.n - 1)
        for i in range(self.pop.n - 1):
            res[i] = float(qw @ y_hat[i]) - float(qw @ self.eq_x[i])
        return res, (table, rho, r_tab, gamma_hat, qw)

    def shoot(self, v):
        n = self.pop.n
        if n == 1:
            y0 = np.array([self.anchor])
            table, rho, r_tab, gamma_hat, qw = self._artifacts(y0, v)
            return y0, (table, rho, r_tab, gamma_hat, qw), 0.0
        y0_free = (self.y0 if self.y0 is not None else self._initial_guess())[:-1].copy()
        res, art = self._residual(y0_free, v)
        scale = max(1.0, abs(self.anchor))
        for it in range(SHOOTING_MAX_ITER):
            err = float(np.abs(res).max())
            if err <= 1e-10 * scale:
                break
            if self._jac is None or it % 8 == 7:
                self._jac = self._fd_jacobian(y0_free, res, v)
            try:
                step = np.linalg.solve(self._jac, -res)
            except np.linalg.LinAlgError:
                raise ConvergenceError("singular shooting Jacobian")
            lam = 1.0
            while lam > 1e-6:
                try:
                    new_res, new_art = self._residual(y0_free + lam * step, v)
                except DomainError:
                    lam *= 0.5
                    continue
                if np.abs(new_res).max() < err or lam <= 2e-6:
                    y0_free = y0_free + lam * step
                    res, art = new_res, new_art
                    break
                lam *= 0.5
            else:
                self._jac = None  # force refresh next round
        else:
            raise ConvergenceError(
                f"shooting did not converge; residuals {res.tolist()}"
            )
        y0 = np.concatenate([y0_free, [self.anchor - y0_free.sum()]])
        self.y0 = y0
        return y0, art, float(np.abs(res).max())

    def _fd_jacobian(self, y0_free, res, v):
        m = y0_free.size
        jac = np.empty((m, m))
        for j in range(m):
            h = self.fd_step * max(1.0, abs(y0_free[j]))
            probe = y0_free.copy()
            probe[j] += h
            try:
                res_h, _ = self._residual(probe, v)
            except DomainError:
                probe[j] -= 2.0 * h
                res_h, _ = self._residual(probe, v)
                h = -h
            jac[:, j] = (res_h - res) / h
        return jac

    def theta(self, v):
        _, (table, rho, r_tab, gamma_hat, qw), _ = self.shoot(v)
        # qw is exp(-R(gamma_hat)) normalized; theta needs the same tilt
        return float(qw @ (self.z.values - v))

    def monotone_certificate(self, v_probe):
        """Grid check z * R'(ess inf X + z) <= 1 on the derived aversion."""
        _, (table, rho, r_tab, _, _), _ = self.shoot(v_probe)
        zmax = float(self.z.values.max() - self.z.values.min())
        if zmax == 0.0:
            return True
        zg = np.linspace(0.0, zmax, 256)
        x0 = float(self.pop.aggregate.values.min())
        pts = np.clip(x0 + zg, table.gamma[0], table.gamma[-1])
        rp = _interp_table(table, rho, pts) / self.pop.n
        return bool(np.all(zg * rp <= 1.0 + 1e-10))


def _comonotone(z_vals: np.ndarray, xz_vals: np.ndarray) -> bool:
    order = np.lexsort((xz_vals, z_vals))
    return bool(np.all(np.diff(xz_vals[order]) >= 0))


def _bisect_sign(fn, a, fa, b, fb, width):
    while (b - a) > width:
        mid = 0.5 * (a + b)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fa > 0) != (fm > 0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def _assemble(population, z, v, table, rho, r_tab, gamma_hat, qw, lambdas,
              moment_residual, analytic_kind=None):
    w = population.space.weights
    density = RandomVariable(population.space, qw / w)
    y_hat = np.atleast_2d(table.at(gamma_hat))
    transfers = [
        RandomVariable(population.space,
                       -population.agents[i].endowment.values + y_hat[i] + lambdas[i] * v)
        for i in range(population.n)
    ]
    return EquilibriumSolution(
        price=float(v),
        density=density,
        allocation_table=table,
        transfers=transfers,
        lambdas=tuple(lambdas),
        moment_residual=float(moment_residual),
        analytic_kind=analytic_kind,
        _r_table=r_tab,
        _rho_table=rho,
    )


def _solve_exponential(population, z, lambdas, n_steps):
    alphas = np.array([float(a.utility.alpha) for a in population.agents])
    alpha = 1.0 / float(np.sum(1.0 / alphas))
    w = population.space.weights
    xz = population.aggregate.values + z.values
    e = -alpha * xz
    tilt = w * np.exp(e - e.max())
    v = float((tilt @ z.values) / tilt.sum())
    gamma_hat = xz - v
    qw = tilt / tilt.sum()

    lo, hi, anchor = _wide_gamma_range(population, z)
    grid = np.linspace(lo, hi, n_steps + 1)
    slopes = alpha / alphas
    eq_gamma = float(qw @ gamma_hat)
    intercepts = np.array([float(qw @ population.agents[i].endowment.values)
                           - slopes[i] * eq_gamma for i in range(population.n)])
    y = intercepts[:, None] + slopes[:, None] * grid[None, :]
    table = AllocationTable(gamma=grid, y=y, log_spaced=False)
    rho = np.full(grid.size, population.n * alpha)
    r_tab = _r_from_rho(table, rho, population.n, anchor)
    residual = 0.0
    return _assemble(population, z, v, table, rho, r_tab, gamma_hat, qw,
                     lambdas, residual, analytic_kind="exponential")


def _is_symmetric_power(population):
    kinds = {a.utility.kind for a in population.agents}
    if kinds != {"power"}:
        return False
    etas = {float(a.utility.eta) for a in population.agents}
    if len(etas) != 1:
        return False
    first = population.agents[0].endowment.values
    return all(np.array_equal(a.endowment.values, first) for a in population.agents)


def _solve_symmetric_power(population, z, lambdas, n_steps, outer_grid, tol):
    n = population.n
    eta = float(population.agents[0].utility.eta)
    lo, hi, anchor = _wide_gamma_range(population, z)
    grid = np.exp(np.linspace(np.log(lo), np.log(hi), n_steps + 1))
    y = np.tile(grid / n, (n, 1))
    table = AllocationTable(gamma=grid, y=y, log_spaced=True)
    rho = _rho_grid(population, table)  # = n*eta/gamma along symmetric allocations
    r_tab = _r_from_rho(table, rho, n, anchor)

    w = population.space.weights
    xz = population.aggregate.values + z.values

    def theta(v):
        r_hat = _interp_table(table, r_tab, xz - v)
        qw = _density_weights(w, r_hat)
        return float(qw @ (z.values - v))

    v = _outer_root(theta, population, z, certified=eta <= 1.0,
                    outer_grid=outer_grid, tol=tol)
    gamma_hat = xz - v
    qw = _density_weights(w, _interp_table(table, r_tab, gamma_hat))
    # symmetric moments hold identically; record the realized imbalance
    res = max(abs(float(qw @ (gamma_hat / n)) - float(qw @ a.endowment.values))
              for a in population.agents)
    return _assemble(population, z, v, table, rho, r_tab, gamma_hat, qw,
                     lambdas, res, analytic_kind="symmetric_power")


def _outer_root(theta, population, z, certified, outer_grid, tol):
    lo, hi = _scan_bounds_pop(population, z)
    if hi <= lo:
        return lo
    width = tol * max(1.0, abs(hi))
    f_lo = theta(lo)
    if f_lo == 0.0:
        return lo
    f_hi = theta(hi)
    if certified:
        if f_hi > 0.0:
            # no fair root below the cap: the market offers the capped value
            return float(population.aggregate.values.min() + z.values.min()) \
                if population.domain == POSITIVE_HALF_LINE else hi
        return _bisect_sign(theta, lo, f_lo, hi, f_hi, width)
    grid = np.linspace(lo, hi, outer_grid)
    vals = [f_lo] + [theta(v) for v in grid[1:-1]] + [f_hi]
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            return float(grid[i])
        if (vals[i] > 0) != (vals[i + 1] > 0):
            return _bisect_sign(theta, float(grid[i]), vals[i],
                                float(grid[i + 1]), vals[i + 1], width)
    if vals[-1] == 0.0:
        return float(grid[-1])
    if population.domain == POSITIVE_HALF_LINE:
        return float(population.aggregate.values.min() + z.values.min())
    raise ConvergenceError("no price fixed point found on the whole line")


def solve_equilibrium(population: AgentPopulation, z: RandomVariable,
                      lambdas=None, n_steps: int = ODE_STEPS_DEFAULT,
                      outer_grid: int = OUTER_GRID_DEFAULT,
                      tol: float = OUTER_TOL) -> EquilibriumSolution:
    """Solve the risk-sharing equilibrium for the externally sold claim z.

    ``lambdas`` splits the sale proceeds between agents (default equal
    split); any vector summing to one is a valid equilibrium convention.
    """
    if z.space is not population.space:
        raise ValidationError("claim must live on the population's scenario space")
    if lambdas is None:
        lambdas = np.full(population.n, 1.0 / population.n)
    else:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.shape != (population.n,) or abs(lambdas.sum() - 1.0) > 1e-12:
            raise ValidationError("lambdas must have one entry per agent and sum to 1")

    kinds = {a.utility.kind for a in population.agents}
    if kinds == {"exponential"}:
        return _solve_exponential(population, z, lambdas, n_steps)
    if _is_symmetric_power(population):
        return _solve_symmetric_power(population, z, lambdas, n_steps,
                                      outer_grid, tol)

    solver = _GeneralSolver(population, z, n_steps)
    v_lo, v_hi = _scan_bounds_pop(population, z)
    certified = _comonotone(z.values, solver.xz)
    if not certified:
        try:
            certified = solver.monotone_certificate(0.5 * (v_lo + v_hi))
        except (ConvergenceError, DomainError):
            certified = False
    v = _outer_root(solver.theta, population, z, certified, outer_grid, tol)
    solver._steps = solver.n_steps  # final polish at full resolution
    solver._jac = None
    y0, (table, rho, r_tab, gamma_hat, qw), res = solver.shoot(v)
    return _assemble(population, z, v, table, rho, r_tab, gamma_hat, qw,
                     lambdas, res)


def representative_profile(population: AgentPopulation,
                           solution: EquilibriumSolution) -> RiskProfile:
    """Risk profile of the harmonic representative, read off the solution.

    r interpolates the integrated harmonic aversion along the tabulated
    allocations (normalized to zero at the aggregate endowment's worst case);
    r_prime interpolates rho/n.  Evaluation outside the tabulated range
    raises.
    """
    table = solution.allocation_table
    r_tab = solution._r_table
    rho = solution._rho_table
    if r_tab is None or rho is None:
        rho = _rho_grid(population, table)
        r_tab = _r_from_rho(table, rho, population.n,
                            float(population.aggregate.values.min()))

    def _interp_shaped(values, g):
        arr = np.asarray(g, dtype=float)
        table._check_range(arr.ravel())
        out = _interp_table(table, values, arr.ravel()).reshape(arr.shape)
        return float(out) if arr.ndim == 0 else out

    def r(g):
        return _interp_shaped(r_tab, g)

    def r_prime(g):
        arr = np.asarray(g, dtype=float)
        out = _interp_shaped(rho, g)
        return out / population.n if arr.ndim else float(out) / population.n

    singular = population.domain == POSITIVE_HALF_LINE
    return RiskProfile(population.domain, r, r_prime,
                       lower_singularity=singular, kind="custom")
