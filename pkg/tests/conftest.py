"""Shared fixture builders and independent oracles for the test suite."""

import numpy as np
import pytest

import endodemand as ed


def shocked_market():
    """Two-scenario market with a shocked state and three clearing prices."""
    space = ed.ScenarioSpace([0.01, 0.99])
    x = ed.RandomVariable(space, [1e-5, 100.0])
    z = ed.RandomVariable(space, [2.0, 1e-5])
    profile = ed.custom_profile(
        r=lambda v: 1.0 - np.exp(-v + 2.3),
        r_prime=lambda v: np.exp(-v + 2.3),
        domain="full_line",
        lower_singularity=False,
        working_interval=(1e-6, 101.0),
    )
    return ed.ClearingProblem(x, z, profile)


def random_space(rng, n=None):
    n = n or int(rng.integers(2, 9))
    w = rng.random(n) + 0.05
    return ed.ScenarioSpace(w / w.sum())


def random_problem(rng, profile_kind=None):
    """Small random clearing problem; profile_kind in {linear, log, None=mixed}."""
    space = random_space(rng)
    n = space.size
    kind = profile_kind or ("linear" if rng.random() < 0.5 else "log")
    if kind == "linear":
        x = ed.RandomVariable(space, rng.uniform(-1.0, 3.0, n))
        z = ed.RandomVariable(space, rng.uniform(-2.0, 2.0, n))
        profile = ed.linear_profile(rng.uniform(0.2, 2.0), x_ref=rng.uniform(-1, 1))
    else:
        x = ed.RandomVariable(space, rng.uniform(2.0, 6.0, n))
        z = ed.RandomVariable(space, rng.uniform(0.1, 1.5, n))
        profile = ed.log_profile(rng.uniform(0.2, 1.0), x_ref=rng.uniform(1.0, 4.0))
    return ed.ClearingProblem(x, z, profile)


def brute_force_roots(problem, points=100_001):
    """Independent root census via a dense sign-change scan of theta.

    Returns (bracket midpoints, cell width).  Uses only the raw theta values
    on the grid, no bisection: the reference the solver is checked against.
    """
    lo = problem.ess_inf_z
    if problem.profile.domain == "full_line":
        hi = problem.ess_sup_z
    else:
        b = problem.ess_inf_xz
        hi = min(problem.ess_sup_z, b - 1e-9 * max(1.0, abs(b)))
    if hi < lo:
        return [], 0.0
    if hi == lo:
        th = problem._theta_scaled(lo)
        return ([lo] if th == 0.0 else []), 0.0
    grid = np.linspace(lo, hi, points)
    th = problem._theta_grid_scaled(grid)
    cell = (hi - lo) / (points - 1)
    mids = [float(grid[i]) for i in np.where(th == 0.0)[0]]
    pos = th > 0
    change = np.where((th[:-1] != 0.0) & (th[1:] != 0.0) & (pos[:-1] != pos[1:]))[0]
    mids.extend(float(0.5 * (grid[i] + grid[i + 1])) for i in change)
    return sorted(mids), cell


def to_scenario_doc(space, variables):
    return {
        "weights": space.weights.tolist(),
        "variables": {k: v.values.tolist() for k, v in variables.items()},
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
