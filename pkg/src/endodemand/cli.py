"""Configuration-driven command line front end.

Subcommands map one-to-one onto the library:

  price / roots   clearing prices of a claim from a scenario JSON file
  demand          order-book density and VWAP curves (scenario file or named law)
  cross-impact    per-asset curves over a Cartesian liquidation grid
  liquidity       curve slopes at zero liquidation
  closed-form     analytic curves of the constant-absolute-risk market
  equilibrium     full multi-agent solve from an agents config
  ruin-limit      prices along a survival-probability sequence
  figures         canned CSV grids (three-equilibria, cross-impact, lognormal)

JSON results embed a meta object and CSV output starts with one comment line,
both recording the library version, the seed, and a hash of the resolved
configuration, so reruns with one config are byte-identical.  Exit codes:
0 success, 2 validation/domain error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import __version__, discretize
from .buhlmann import Agent, AgentPopulation, solve_equilibrium
from .clearing import (
    ClearingProblem,
    GRID_POINTS_DEFAULT,
    ROOT_TOL_DEFAULT,
    clear,
    find_all_roots,
    ruin_limit_price,
)
from .closed_forms import (
    EsscherMarket,
    bernoulli_curves,
    gamma_curves,
    normal_curves,
    poisson_curves,
)
from .errors import ConvergenceError, DomainError, ValidationError
from .inverse_demand import (
    LiquidationProblem,
    cross_impact_grid,
    demand_curve,
    liquidity_at_zero,
)
from .risk_profile import custom_profile, exponential_utility, linear_profile, log_profile, power_utility
from .scenario import RandomVariable, SamplingConfig, ScenarioSpace, load_scenario_json, mix_with_floor, sample


def _config_hash(ns: argparse.Namespace) -> str:
    cfg = {k: v for k, v in sorted(vars(ns).items()) if k not in ("output", "func")}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _meta(ns) -> dict:
    return {
        "library": "endodemand",
        "version": __version__,
        "seed": getattr(ns, "seed", None),
        "config": _config_hash(ns),
    }


def _write_json(ns, payload: dict) -> None:
    payload = {"meta": _meta(ns), **payload}
    text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    if ns.output:
        with open(ns.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(ns, header: list, rows) -> None:
    meta = _meta(ns)
    lines = [f"# endodemand version={meta['version']} seed={meta['seed']} config={meta['config']}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    if ns.output:
        with open(ns.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _profile_from_args(ns):
    if ns.profile == "linear":
        if ns.alpha is None:
            raise ValidationError("linear profile requires --alpha")
        return linear_profile(ns.alpha, x_ref=ns.x_ref if ns.x_ref is not None else 0.0)
    if ns.profile == "log":
        if ns.eta is None or ns.x_ref is None:
            raise ValidationError("log profile requires --eta and --x-ref")
        return log_profile(ns.eta, x_ref=ns.x_ref)
    raise ValidationError(
        f"profile {ns.profile!r} is not available from the command line; "
        "custom profiles are a library-API feature"
    )


def _variables(ns, *names):
    _, variables = load_scenario_json(ns.input)
    out = []
    for name in names:
        if name not in variables:
            raise ValidationError(f"variable {name!r} not present in {ns.input}")
        out.append(variables[name])
    return out


def _law_params(ns) -> dict:
    law = ns.law
    if law == "poisson":
        if ns.lam is None:
            raise ValidationError("poisson law requires --lambda")
        return {"lam": ns.lam}
    if law == "bernoulli":
        if ns.p is None:
            raise ValidationError("bernoulli law requires --p")
        return {"p": ns.p}
    if law == "gamma":
        if ns.k is None or ns.theta is None:
            raise ValidationError("gamma law requires --k and --theta")
        return {"k": ns.k, "theta": ns.theta}
    if law == "normal":
        if ns.mu is None or ns.var is None:
            raise ValidationError("normal law requires --mu and --var")
        return {"mu": ns.mu, "cov": ns.var}
    if law == "lognormal":
        if ns.mu is None or ns.var is None:
            raise ValidationError("lognormal law requires --mu and --var")
        return {"mu": ns.mu, "sigma2": ns.var}
    raise ValidationError(f"unknown law {law!r}")


def _law_variable(ns):
    """Discretize the named law: exact supports where possible, else sampling."""
    params = _law_params(ns)
    if ns.law == "poisson":
        _, q = discretize.poisson_support(params["lam"])
        return q
    if ns.law == "bernoulli":
        _, q = discretize.bernoulli_support(params["p"])
        return q
    if ns.law == "gamma":
        _, q = discretize.gamma_support(params["k"], params["theta"])
        return q
    if ns.seed is None:
        raise ValidationError(f"law {ns.law!r} is sampled and requires --seed")
    cfg = SamplingConfig(ns.law, params, sample_count=ns.samples, seed=ns.seed)
    return sample(cfg)


def _s_grid(spec: str) -> np.ndarray:
    try:
        start, stop, count = spec.split(":")
        grid = np.linspace(float(start), float(stop), int(count))
    except Exception as exc:
        raise ValidationError(f"bad s-grid spec {spec!r}; expected start:stop:count") from exc
    if grid.size < 1 or np.any(grid < 0):
        raise ValidationError("s-grid must be nonnegative")
    return grid


# -- subcommand handlers ------------------------------------------------------

def _cmd_price(ns, roots_only=False):
    x, z = _variables(ns, ns.x, ns.z)
    problem = ClearingProblem(x, z, _profile_from_args(ns))
    if roots_only:
        roots = find_all_roots(problem, grid_points=ns.grid, tol=ns.tol)
        _write_json(ns, {"roots": list(roots)})
        return
    res = clear(problem, grid_points=ns.grid, tol=ns.tol)
    _write_json(ns, {
        "roots": list(res.roots),
        "selected": res.selected,
        "existence": res.existence,
        "diagnosis": res.diagnosis,
        "certificates": sorted(res.uniqueness_certificates),
        "bracket_resolution": res.bracket_resolution,
    })


def _cmd_demand(ns):
    if ns.law:
        q = _law_variable(ns)
        x = q.space.constant(ns.x_value)
        if ns.profile == "linear" and ns.alpha is None:
            raise ValidationError("law mode requires --alpha for the linear profile")
        profile = _profile_from_args(ns)
    else:
        if not ns.input or not ns.q:
            raise ValidationError("demand needs either --law or --input with --q")
        x, q = _variables(ns, ns.x, ns.q)
        profile = _profile_from_args(ns)
    lp = LiquidationProblem(x, q, profile)
    curve = demand_curve(lp, s_max=ns.s_max, n_points=ns.points,
                         grid_points=ns.grid, tol=ns.tol)
    rows = [(float(s), float(f), float(fb), bool(d))
            for s, f, fb, d in zip(curve.s_grid, curve.f, curve.f_bar, curve.in_domain)]
    _write_csv(ns, ["s", "f", "f_bar", "in_domain"], rows)


def _cmd_cross_impact(ns):
    x, *qs = _variables(ns, ns.x, *ns.q)
    grids = [_s_grid(g) for g in ns.s_grid]
    result = cross_impact_grid(x, qs, _profile_from_args(ns), grids,
                               grid_points=ns.grid, tol=ns.tol)
    header = [f"s{i + 1}" for i in range(len(qs))] + ["asset", "f", "f_bar", "in_domain"]
    rows = [(*s_vec, k + 1, f, fb, dom) for s_vec, k, f, fb, dom in result.iter_rows()]
    _write_csv(ns, header, rows)


def _cmd_liquidity(ns):
    x, q = _variables(ns, ns.x, ns.q)
    lp = LiquidationProblem(x, q, _profile_from_args(ns))
    f_slope, f_bar_slope = liquidity_at_zero(lp)
    _write_json(ns, {"f_slope": f_slope, "f_bar_slope": f_bar_slope})


def _cmd_closed_form(ns):
    market = EsscherMarket(ns.alpha)
    grid = _s_grid(ns.s_grid)
    params = _law_params(ns)
    if ns.law == "poisson":
        f, fb = poisson_curves(market, params["lam"], grid)
    elif ns.law == "bernoulli":
        f, fb = bernoulli_curves(market, params["p"], grid)
    elif ns.law == "gamma":
        f, fb = gamma_curves(market, params["k"], params["theta"], grid)
    elif ns.law == "normal":
        pairs = [normal_curves(market, params["mu"], params["cov"], s) for s in grid]
        f = np.array([float(p[0][0]) for p in pairs])
        fb = np.array([float(p[1][0]) for p in pairs])
    else:
        raise ValidationError(f"closed forms are not available for law {ns.law!r}")
    rows = [(float(s), float(fv), float(fbv), True) for s, fv, fbv in zip(grid, f, fb)]
    _write_csv(ns, ["s", "f", "f_bar", "in_domain"], rows)


def _cmd_equilibrium(ns):
    with open(ns.agents, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if "agents" not in spec or not isinstance(spec["agents"], list):
        raise ValidationError("agents config must contain an 'agents' list")
    _, variables = load_scenario_json(ns.input)
    agents = []
    for i, a in enumerate(spec["agents"]):
        name = a.get("endowment")
        if name not in variables:
            raise ValidationError(f"agent {i}: endowment {name!r} not in scenario file")
        kind = a.get("utility")
        if kind == "exp":
            utility = exponential_utility(a["alpha"])
        elif kind == "power":
            utility = power_utility(a["eta"])
        else:
            raise ValidationError(f"agent {i}: utility must be 'exp' or 'power'")
        agents.append(Agent(utility, variables[name]))
    if ns.z not in variables:
        raise ValidationError(f"variable {ns.z!r} not present in {ns.input}")
    population = AgentPopulation(agents)
    solution = solve_equilibrium(population, variables[ns.z],
                                 lambdas=spec.get("lambdas"))
    _write_json(ns, {
        "price": solution.price,
        "lambdas": list(solution.lambdas),
        "density": solution.density.values.tolist(),
        "transfers": [t.values.tolist() for t in solution.transfers],
        "moment_residual": solution.moment_residual,
    })


def _cmd_ruin_limit(ns):
    x, z = _variables(ns, ns.x, ns.z)
    problem = ClearingProblem(x, z, _profile_from_args(ns))
    ps = [float(p) for p in ns.p_grid.split(",")]
    prices = ruin_limit_price(problem, ps, grid_points=ns.grid, tol=ns.tol)
    _write_json(ns, {"entries": [{"p": p, "price": v} for p, v in zip(ps, prices)]})


# -- canned figure grids ------------------------------------------------------

def _figure_three_equilibria(ns):
    space = ScenarioSpace([0.01, 0.99])
    x = RandomVariable(space, [1e-5, 100.0])
    z = RandomVariable(space, [2.0, 1e-5])
    profile = custom_profile(
        r=lambda v: 1.0 - np.exp(-v + 2.3),
        r_prime=lambda v: np.exp(-v + 2.3),
        domain="full_line", lower_singularity=False,
        working_interval=(1e-6, 101.0),
    )
    problem = ClearingProblem(x, z, profile)
    from .clearing import h_map
    vs = np.linspace(1e-5, 2.0, 401)
    rows = [(float(v), float(h_map(problem, v))) for v in vs]
    _write_csv(ns, ["v", "h"], rows)


def _figure_cross_impact(ns):
    if ns.seed is None:
        raise ValidationError("this figure samples a lognormal law and requires --seed")
    cfg = SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                         sample_count=ns.samples, seed=ns.seed)
    q1 = sample(cfg)
    cfg2 = SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                          sample_count=ns.samples, seed=ns.seed + 1)
    q2_vals = sample(cfg2).values
    q2 = RandomVariable(q1.space, q2_vals)
    x = q1.space.constant(2.0)
    grid = np.linspace(0.0, 1.0, 9)
    result = cross_impact_grid(x, [q1, q2], log_profile(1.0, x_ref=2.0),
                               [grid, grid], grid_points=513, tol=ns.tol)
    header = ["s1", "s2", "asset", "f", "f_bar", "in_domain"]
    rows = [(*s_vec, k + 1, f, fb, dom) for s_vec, k, f, fb, dom in result.iter_rows()]
    _write_csv(ns, header, rows)


def _figure_lognormal(ns):
    if ns.seed is None:
        raise ValidationError("this figure samples a lognormal law and requires --seed")
    cfg = SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                         sample_count=ns.samples, seed=ns.seed)
    q_plain = sample(cfg)
    q_ruin = mix_with_floor(q_plain, 0.0, 1e-5)
    rows = []
    for label, q in (("plain", q_plain), ("with_ruin", q_ruin)):
        x = q.space.constant(2.0)
        lp = LiquidationProblem(x, q, log_profile(1.0, x_ref=2.0))
        curve = demand_curve(lp, s_max=4.0, n_points=33, grid_points=513, tol=ns.tol)
        rows.extend(
            (label, float(s), float(f), float(fb), bool(d))
            for s, f, fb, d in zip(curve.s_grid, curve.f, curve.f_bar, curve.in_domain)
        )
    _write_csv(ns, ["variant", "s", "f", "f_bar", "in_domain"], rows)


def _cmd_figures(ns):
    if ns.figure == "three-equilibria":
        _figure_three_equilibria(ns)
    elif ns.figure == "cross-impact":
        _figure_cross_impact(ns)
    elif ns.figure == "lognormal":
        _figure_lognormal(ns)
    else:  # pragma: no cover - argparse choices guard this
        raise ValidationError(f"unknown figure {ns.figure!r}")


# -- parser -------------------------------------------------------------------

def _add_common(p, scenario=True, profile=True):
    if scenario:
        p.add_argument("--input", help="scenario JSON file")
    if profile:
        p.add_argument("--profile", choices=["linear", "log", "custom"], default="linear")
        p.add_argument("--alpha", type=float, help="linear profile slope")
        p.add_argument("--eta", type=float, help="log profile relative aversion")
        p.add_argument("--x-ref", dest="x_ref", type=float, help="profile reference point")
    p.add_argument("--grid", type=int, default=GRID_POINTS_DEFAULT,
                   help="scan grid points for root finding")
    p.add_argument("--tol", type=float, default=ROOT_TOL_DEFAULT,
                   help="root bracket tolerance")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for sampled laws (mandatory when sampling)")
    p.add_argument("--samples", type=int, default=10_000,
                   help="sample count for sampled laws")
    p.add_argument("--output", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endodemand",
        description="Equilibrium clearing prices and endogenous inverse demand functions",
    )
    parser.add_argument("--version", action="version", version=f"endodemand {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="clearing prices of a claim")
    _add_common(p)
    p.add_argument("--x", required=True, help="aggregate holdings variable name")
    p.add_argument("--z", required=True, help="claim variable name")
    p.set_defaults(func=_cmd_price)

    p = sub.add_parser("roots", help="all pricing fixed points")
    _add_common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--z", required=True)
    p.set_defaults(func=lambda ns: _cmd_price(ns, roots_only=True))

    p = sub.add_parser("demand", help="order-book density and VWAP curves")
    _add_common(p)
    p.add_argument("--x", help="holdings variable name (scenario mode)")
    p.add_argument("--q", help="portfolio variable name (scenario mode)")
    p.add_argument("--law", choices=["poisson", "bernoulli", "gamma", "normal", "lognormal"],
                   help="price a named law instead of a scenario file")
    p.add_argument("--lambda", dest="lam", type=float, help="poisson rate")
    p.add_argument("--p", type=float, help="bernoulli success probability")
    p.add_argument("--k", type=float, help="gamma shape")
    p.add_argument("--theta", type=float, help="gamma scale")
    p.add_argument("--mu", type=float, help="normal/lognormal location")
    p.add_argument("--var", type=float, help="normal/lognormal variance")
    p.add_argument("--x-value", dest="x_value", type=float, default=0.0,
                   help="deterministic holdings level in law mode")
    p.add_argument("--s-max", dest="s_max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=31)
    p.set_defaults(func=_cmd_demand)

    p = sub.add_parser("cross-impact", help="multi-asset demand curves with cross impacts")
    _add_common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--q", action="append", required=True,
                   help="asset variable name (repeat per asset)")
    p.add_argument("--s-grid", dest="s_grid", action="append", required=True,
                   help="start:stop:count per asset (repeat per asset)")
    p.set_defaults(func=_cmd_cross_impact)

    p = sub.add_parser("liquidity", help="curve slopes at zero liquidation")
    _add_common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--q", required=True)
    p.set_defaults(func=_cmd_liquidity)

    p = sub.add_parser("closed-form", help="analytic curves of the exponential-utility market")
    _add_common(p, scenario=False, profile=False)
    p.add_argument("--law", choices=["poisson", "bernoulli", "gamma", "normal"], required=True)
    p.add_argument("--alpha", type=float, required=True, help="aggregated risk aversion")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--var", type=float)
    p.add_argument("--s-grid", dest="s_grid", default="0:3:21")
    p.set_defaults(func=_cmd_closed_form)

    p = sub.add_parser("equilibrium", help="full multi-agent equilibrium solve")
    _add_common(p, profile=False)
    p.add_argument("--agents", required=True, help="agents config JSON")
    p.add_argument("--z", required=True, help="claim variable name")
    p.set_defaults(func=_cmd_equilibrium)

    p = sub.add_parser("ruin-limit", help="prices along survival probabilities")
    _add_common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--p-grid", dest="p_grid", default="0.9,0.99,0.999,0.9999,0.99999")
    p.set_defaults(func=_cmd_ruin_limit)

    p = sub.add_parser("figures", help="canned CSV grids for the survey plots")
    _add_common(p, scenario=False, profile=False)
    p.add_argument("--figure", choices=["three-equilibria", "cross-impact", "lognormal"],
                   required=True)
    p.set_defaults(func=_cmd_figures)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        ns.func(ns)
    except (ValidationError, DomainError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"solver failed to converge: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
