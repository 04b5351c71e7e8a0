import numpy as np
import pytest
from scipy.integrate import quad

import endodemand as ed
from endodemand.errors import ValidationError


def poisson_liquidation(lam=2.0, alpha=1.0, x_level=1.0):
    space, q = ed.discretize.poisson_support(lam)
    x = space.constant(x_level)
    return ed.LiquidationProblem(x, q, ed.linear_profile(alpha))


def lognormal_ruin_liquidation(n=20_000, seed=717, x_level=2.0, eta=1.0):
    q = ed.mix_with_floor(
        ed.sample(ed.SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                                    sample_count=n, seed=seed)),
        0.0, 1e-5,
    )
    x = q.space.constant(x_level)
    return ed.LiquidationProblem(x, q, ed.log_profile(eta, x_ref=x_level))


class TestJointWorstCase:
    def test_violation_rejected(self):
        space = ed.ScenarioSpace([0.5, 0.5])
        x = ed.RandomVariable(space, [2.0, 1.0])
        q = ed.RandomVariable(space, [0.0, 1.0])
        with pytest.raises(ValidationError, match="joint worst-case"):
            ed.LiquidationProblem(x, q, ed.log_profile(1.0, 1.0))

    def test_deterministic_holdings_pass(self):
        space = ed.ScenarioSpace([0.5, 0.5])
        q = ed.RandomVariable(space, [0.0, 1.0])
        ed.LiquidationProblem(space.constant(2.0), q, ed.log_profile(1.0, 2.0))


class TestVwap:
    def test_constant_portfolio(self):
        space = ed.ScenarioSpace([0.4, 0.6])
        lp = ed.LiquidationProblem(
            space.constant(3.0), space.constant(1.2), ed.log_profile(1.0, 3.0)
        )
        for s in [0.0, 0.5, 1.0, 2.0]:
            assert ed.vwap(lp, s) == pytest.approx(1.2, abs=1e-10)

    def test_poisson_linear_exponential_curve(self):
        lp = poisson_liquidation(lam=2.0, alpha=1.0)
        for s in [0.0, 0.4, 1.1, 2.0]:
            assert ed.vwap(lp, s, tol=1e-13) == pytest.approx(
                2.0 * np.exp(-s), abs=1e-8
            )

    def test_beyond_boundary_value(self):
        lp = lognormal_ruin_liquidation()
        s = 3.5
        assert ed.vwap(lp, s, grid_points=257) == 2.0 / s + 0.0

    def test_negative_s_rejected(self):
        lp = poisson_liquidation()
        with pytest.raises(ValidationError):
            ed.vwap(lp, -0.5)


class TestOrderBookDensity:
    def test_constant_portfolio(self):
        space = ed.ScenarioSpace([0.4, 0.6])
        lp = ed.LiquidationProblem(
            space.constant(3.0), space.constant(1.2), ed.log_profile(1.0, 3.0)
        )
        for s in [0.0, 0.5, 2.0]:
            assert ed.order_book_density(lp, s) == pytest.approx(1.2, abs=1e-10)

    def test_poisson_linear_marginal_curve(self):
        lp = poisson_liquidation(lam=2.0, alpha=1.0)
        for s in [0.0, 0.5, 1.0, 1.7]:
            assert ed.order_book_density(lp, s, tol=1e-13) == pytest.approx(
                (1.0 - s) * 2.0 * np.exp(-s), abs=1e-8
            )

    def test_requires_certificate(self):
        space = ed.ScenarioSpace([0.2, 0.5, 0.3])
        x = ed.RandomVariable(space, [1.0, 100.0, 50.0])
        q = ed.RandomVariable(space, [0.0, 2.0, 3.0])
        profile = ed.custom_profile(
            r=lambda v: 1.0 - np.exp(-v + 2.3),
            r_prime=lambda v: np.exp(-v + 2.3),
            domain="full_line", lower_singularity=False,
            working_interval=(0.5, 110.0),
        )
        lp = ed.LiquidationProblem(x, q, profile)
        assert not lp.clearing_problem(1.0).certificates
        with pytest.raises(ValidationError, match="certificate"):
            ed.order_book_density(lp, 1.0)

    def test_integral_identity(self):
        lp = poisson_liquidation(lam=1.5, alpha=0.8)
        s_top = 1.2
        total, err = quad(lambda t: ed.order_book_density(lp, t, grid_points=257),
                          0.0, s_top, limit=80)
        lhs = s_top * ed.vwap(lp, s_top, grid_points=257)
        assert lhs == pytest.approx(total, rel=1e-6)


class TestDemandCurve:
    def test_poisson_vwap_strictly_decreasing(self):
        lp = poisson_liquidation(lam=2.0, alpha=1.0)
        curve = ed.demand_curve(lp, s_max=3.0, n_points=16)
        assert np.all(np.diff(curve.f_bar) < 0)
        assert curve.dom_boundary is None
        assert curve.f[0] == curve.f_bar[0]

    def test_gamma_matches_closed_form(self):
        space, q = ed.discretize.gamma_support(2.0, 1.0)
        lp = ed.LiquidationProblem(space.constant(1.0), q, ed.linear_profile(1.0))
        curve = ed.demand_curve(lp, s_max=3.0, n_points=7, tol=1e-13)
        expected = 2.0 / (1.0 + curve.s_grid)
        assert np.allclose(curve.f_bar, expected, atol=1e-8)

    def test_lognormal_boundary_detected(self):
        lp = lognormal_ruin_liquidation()
        curve = ed.demand_curve(lp, s_max=4.0, n_points=5, grid_points=257)
        assert curve.dom_boundary is not None
        assert curve.dom_boundary == pytest.approx(2.568, abs=0.05)
        assert curve.in_domain[curve.s_grid < curve.dom_boundary].all()
        assert not curve.in_domain[curve.s_grid > curve.dom_boundary].any()

    def test_capped_segment_value(self):
        lp = lognormal_ruin_liquidation()
        curve = ed.demand_curve(lp, s_max=4.0, n_points=5, grid_points=257)
        beyond = curve.s_grid > curve.dom_boundary
        assert np.allclose(curve.f_bar[beyond], 2.0 / curve.s_grid[beyond])
        assert np.allclose(curve.f[beyond], 0.0)

    def test_vwap_floor(self, rng):
        for _ in range(5):
            space = ed.ScenarioSpace(np.full(6, 1 / 6))
            q = ed.RandomVariable(space, rng.uniform(0.5, 2.0, 6))
            lp = ed.LiquidationProblem(space.constant(4.0), q, ed.log_profile(0.9, 4.0))
            curve = ed.demand_curve(lp, s_max=2.0, n_points=9)
            assert np.all(curve.f_bar > ed.ess_inf(q))

    def test_continuity_under_grid_refinement(self):
        lp = poisson_liquidation(lam=2.0, alpha=1.0)
        def max_jump(n):
            c = ed.demand_curve(lp, s_max=2.0, n_points=n)
            return np.abs(np.diff(c.f_bar)).max()
        coarse, fine = max_jump(9), max_jump(17)
        assert fine <= 0.75 * coarse


class TestLiquidityAtZero:
    def test_deterministic_portfolio(self):
        space = ed.ScenarioSpace([0.5, 0.5])
        lp = ed.LiquidationProblem(
            space.constant(3.0), space.constant(1.0), ed.log_profile(1.0, 3.0)
        )
        assert ed.liquidity_at_zero(lp) == (0.0, 0.0)

    def test_bernoulli_linear(self):
        space, q = ed.discretize.bernoulli_support(0.3)
        lp = ed.LiquidationProblem(space.constant(2.0), q, ed.linear_profile(2.0))
        f_slope, fb_slope = ed.liquidity_at_zero(lp)
        assert f_slope == pytest.approx(-2.0 * 2.0 * 0.3 * 0.7, rel=1e-12)
        assert fb_slope == pytest.approx(0.5 * f_slope)

    def test_random_x_formula_vs_finite_difference(self):
        # random holdings exercise the full three-term expression
        space = ed.ScenarioSpace([0.3, 0.3, 0.4])
        x = ed.RandomVariable(space, [2.0, 3.0, 4.0])
        q = ed.RandomVariable(space, [0.5, 1.5, 1.0])
        lp = ed.LiquidationProblem(x, q, ed.linear_profile(0.7))
        f_slope, _ = ed.liquidity_at_zero(lp)
        h = 1e-4
        def f_at(s):
            prob = ed.ClearingProblem(x, q * s, lp.profile)
            v = ed.clear(prob, tol=1e-13).selected
            gap = x.values + s * q.values - v
            r = lp.profile.r(gap)
            tilt = space.weights * np.exp(-(r - r.min()))
            lever = 1.0 - (s * q.values - v) * lp.profile.r_prime(gap)
            return float((tilt * lever) @ q.values) / float(tilt @ lever)
        fd = (f_at(h) - f_at(-h)) / (2 * h)
        assert f_slope == pytest.approx(fd, rel=1e-3)


class TestCrossImpact:
    def test_single_asset_reduces_to_demand_curve(self):
        lp = poisson_liquidation(lam=2.0, alpha=1.0)
        sg = np.linspace(0.0, 2.0, 6)
        curve = ed.demand_curve(lp, s_max=2.0, n_points=6)
        grid = ed.cross_impact_grid(lp.x, [lp.q], lp.profile, [sg])
        assert np.array_equal(grid.f[:, 0], curve.f)
        assert np.array_equal(grid.f_bar[:, 0], curve.f_bar)

    def test_independent_assets_no_cross_impact(self):
        # independent sampled assets under a linear tilt: within noise, the
        # price of asset 1 ignores how much of asset 2 is sold
        n = 40_000
        q1 = ed.sample(ed.SamplingConfig("gamma", {"k": 2.0, "theta": 0.5},
                                         sample_count=n, seed=101))
        q2_vals = ed.sample(ed.SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                                              sample_count=n, seed=202)).values
        q2 = ed.RandomVariable(q1.space, q2_vals)
        x = q1.space.constant(1.0)
        prof = ed.linear_profile(0.8)
        grid = ed.cross_impact_grid(x, [q1, q2], prof, [[0.7], [0.0, 0.5, 1.0]])
        fb1 = grid.f_bar[0, :, 0]
        spread = fb1.max() - fb1.min()
        # batch-means error of the tilted mean at the largest tilt
        w = np.exp(-0.8 * (0.7 * q1.values + 1.0 * q2_vals))
        batches = (q1.values * w).reshape(50, -1).mean(axis=1) / w.reshape(50, -1).mean(axis=1)
        se = batches.std(ddof=1) / np.sqrt(50)
        assert spread <= 6.0 * se  # two estimates, 3 SE each

    def test_power_profile_shows_cross_impacts(self):
        n = 20_000
        q1 = ed.sample(ed.SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                                         sample_count=n, seed=11))
        q2_vals = ed.sample(ed.SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                                              sample_count=n, seed=12)).values
        q2 = ed.RandomVariable(q1.space, q2_vals)
        x = q1.space.constant(2.0)
        grid = ed.cross_impact_grid(x, [q1, q2], ed.log_profile(1.0, 2.0),
                                    [[0.8], [0.0, 0.8]], grid_points=513)
        fb1 = grid.f_bar[0, :, 0]
        # selling the second asset depresses the first asset's price materially
        assert fb1[1] < fb1[0] - 0.01

    def test_zero_node_matches_tilted_expectation(self):
        lp = poisson_liquidation(lam=2.0, alpha=1.0)
        grid = ed.cross_impact_grid(lp.x, [lp.q], lp.profile, [[0.0]])
        assert grid.f_bar[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert grid.selected[0] == pytest.approx(0.0, abs=1e-12)


class TestNonconvexityWitnesses:
    def test_discrete_skewed_fixture(self):
        space, q = ed.discretize.discrete_support([0.0, 1.0, 16.0], [0.02, 0.49, 0.49])
        lp = ed.LiquidationProblem(space.constant(1.0), q, ed.linear_profile(1.0))
        h = 1e-3
        fb = lambda s: ed.vwap(lp, s, tol=1e-13)
        d2 = (fb(1.0 + h) - 2 * fb(1.0) + fb(1.0 - h)) / h**2
        assert d2 < 0  # convexity fails at the order-book depth

    def test_lognormal_fixture(self):
        lp = lognormal_ruin_liquidation(n=20_000)
        s0 = 2.4
        h = 0.05
        fb = lambda s: ed.vwap(lp, s, grid_points=513)
        d2 = (fb(s0 + h) - 2 * fb(s0) + fb(s0 - h)) / h**2
        assert d2 < 0
