import numpy as np
import pytest

import endodemand as ed
from endodemand.errors import DomainError, ValidationError

from conftest import brute_force_roots, random_problem, shocked_market

PAPER_ROOTS = (0.08403, 1.38977, 1.98985)


def make_problem(weights, x_vals, z_vals, profile):
    space = ed.ScenarioSpace(weights)
    return ed.ClearingProblem(
        ed.RandomVariable(space, x_vals), ed.RandomVariable(space, z_vals), profile
    )


class TestHMap:
    def test_constant_claim(self):
        p = make_problem([0.4, 0.6], [2.0, 3.0], [1.5, 1.5], ed.log_profile(1.0, 2.0))
        for v in [0.0, 1.0, 1.5, 2.0]:
            assert ed.h_map(p, v) == pytest.approx(1.5, abs=1e-12)

    def test_shocked_market_near_fixed_point(self):
        p = shocked_market()
        assert ed.h_map(p, 0.08403) == pytest.approx(0.08403, abs=1e-4)

    def test_linear_profile_v_independent(self, rng):
        space = ed.ScenarioSpace(np.full(8, 1 / 8))
        x = space.constant(5.0)
        z = ed.RandomVariable(space, rng.uniform(-1, 1, 8))
        p = ed.ClearingProblem(x, z, ed.linear_profile(1.3, x_ref=2.0))
        w = np.full(8, 1 / 8) * np.exp(-1.3 * z.values)
        esscher = float(w @ z.values / w.sum())
        for v in rng.uniform(-1, 1, 5):
            assert ed.h_map(p, float(v)) == pytest.approx(esscher, rel=1e-12)

    def test_bounds(self, rng):
        checked = 0
        for _ in range(40):
            p = random_problem(rng)
            lo, hi = p.ess_inf_z, p.ess_sup_z
            hi_eval = hi if p.profile.domain == "full_line" else min(hi, p.ess_inf_xz - 1e-6)
            if hi_eval <= lo:
                continue
            v = float(rng.uniform(lo, hi_eval))
            h = ed.h_map(p, v)
            assert lo - 1e-12 <= h <= hi + 1e-12
            checked += 1
        assert checked >= 20

    def test_domain_violation_names_scenario(self):
        p = make_problem([0.4, 0.6], [2.0, 3.0], [1.0, 1.5], ed.log_profile(1.0, 2.0))
        with pytest.raises(DomainError, match="X="):
            ed.h_map(p, 10.0)


class TestTheta:
    def test_constant_claim_zero(self):
        p = make_problem([0.4, 0.6], [2.0, 3.0], [1.5, 1.5], ed.log_profile(1.0, 2.0))
        assert ed.theta(p, 1.5) == 0.0

    def test_positive_at_lower_bound(self, rng):
        for _ in range(20):
            p = random_problem(rng)
            if p.ess_sup_z > p.ess_inf_z:
                assert ed.theta(p, p.ess_inf_z) > 0.0

    def test_shocked_market_three_sign_changes(self):
        p = shocked_market()
        grid = np.linspace(1e-5, 2.0, 4001)
        th = p._theta_grid_scaled(grid)
        changes = np.sum(np.sign(th[:-1]) != np.sign(th[1:]))
        assert changes == 3

    def test_sign_matches_h_map(self, rng):
        for _ in range(30):
            p = random_problem(rng)
            hi_eval = p.ess_sup_z if p.profile.domain == "full_line" \
                else min(p.ess_sup_z, p.ess_inf_xz - 1e-6)
            if hi_eval <= p.ess_inf_z:
                continue
            v = float(rng.uniform(p.ess_inf_z, hi_eval))
            lhs = ed.theta(p, v)
            rhs = ed.h_map(p, v) - v
            if abs(rhs) > 1e-9:
                assert np.sign(lhs) == np.sign(rhs)


class TestFindAllRoots:
    def test_three_equilibria(self):
        roots = ed.find_all_roots(shocked_market())
        assert len(roots) == 3
        for got, want in zip(roots, PAPER_ROOTS):
            assert got == pytest.approx(want, abs=1e-4)

    def test_constant_claim(self):
        p = make_problem([0.4, 0.6], [2.0, 3.0], [1.5, 1.5], ed.log_profile(1.0, 2.0))
        assert ed.find_all_roots(p) == [1.5]

    def test_esscher_bernoulli(self):
        p = make_problem([0.5, 0.5], [5.0, 5.0], [0.0, 1.0], ed.linear_profile(1.0))
        roots = ed.find_all_roots(p)
        assert len(roots) == 1
        assert roots[0] == pytest.approx(1.0 / (1.0 + np.e), abs=1e-9)

    def test_brute_force_agreement(self, rng):
        p = shocked_market()
        expected, cell = brute_force_roots(p)
        got = ed.find_all_roots(p)
        assert len(got) == len(expected)
        for g, e in zip(got, expected):
            assert abs(g - e) <= cell


class TestExistenceDiagnosis:
    def test_full_line(self):
        p = make_problem([0.5, 0.5], [1.0, 2.0], [0.0, 1.0], ed.linear_profile(1.0))
        assert ed.existence_diagnosis(p) == "full_line_guaranteed"

    def test_material_atom_with_singularity(self):
        # X+Z hits its minimum on a 25% scenario; the profile is singular at 0
        p = make_problem([0.25, 0.75], [4.0, 4.0], [1.0, 2.0], ed.log_profile(1.0, 4.0))
        assert ed.existence_diagnosis(p) == "singular_atom"

    def test_micro_atom_boundary_check(self):
        # lognormal sample with an explicit zero floor of negligible mass:
        # the diagnosis ignores the micro-atom and evaluates the boundary test,
        # which fails for liquidations beyond the market's capacity
        q = ed.mix_with_floor(
            ed.sample(ed.SamplingConfig("lognormal", {"mu": -0.125, "sigma2": 0.25},
                                        sample_count=20_000, seed=11)),
            0.0, 1e-6,
        )
        x = q.space.constant(2.0)
        prof = ed.log_profile(1.0, x_ref=2.0)
        small = ed.ClearingProblem(x, q * 1.0, prof)
        big = ed.ClearingProblem(x, q * 3.0, prof)
        assert ed.existence_diagnosis(small) == "boundary_ok"
        assert ed.existence_diagnosis(big) == "boundary_fails"

    def test_risk_neutral_boundary(self):
        # eta = 0: no singularity, the boundary value is E[Z]
        fails = make_problem([0.5, 0.5], [0.5, 0.5], [2.0, 3.2], ed.log_profile(0.0, 0.5))
        holds = make_problem([0.5, 0.5], [2.0, 2.0], [0.5, 1.0], ed.log_profile(0.0, 2.0))
        assert ed.existence_diagnosis(fails) == "boundary_fails"
        assert ed.existence_diagnosis(holds) == "boundary_ok"


class TestUniquenessCertificates:
    def test_deterministic_x_comonotone(self, rng):
        space = ed.ScenarioSpace(np.full(6, 1 / 6))
        z = ed.RandomVariable(space, rng.uniform(0.5, 1.5, 6))
        p = ed.ClearingProblem(space.constant(4.0), z, ed.log_profile(1.0, 4.0))
        assert "comonotone" in p.certificates

    def test_linear_flag(self):
        p = make_problem([0.5, 0.5], [1.0, 2.0], [0.0, 1.0], ed.linear_profile(1.0))
        assert "linear_R" in p.certificates

    def test_shocked_market_no_certificates(self):
        assert shocked_market().certificates == frozenset()

    def test_monotone_map_for_moderate_relative_aversion(self):
        p = make_problem([0.5, 0.5], [4.0, 5.0], [0.5, 1.0], ed.log_profile(1.0, 4.0))
        assert "monotone_map" in p.certificates

    def test_monotone_map_fails_for_steep_aversion(self):
        # eta = 8 makes z * r'(x + z) exceed 1 well inside the claim range
        p = make_problem([0.5, 0.5], [1.0, 1.0], [0.5, 8.0], ed.log_profile(8.0, 1.0))
        assert "monotone_map" not in p.certificates


class TestClear:
    def test_selects_minimum_root(self):
        res = ed.clear(shocked_market())
        assert res.selected == pytest.approx(PAPER_ROOTS[0], abs=1e-4)
        assert res.existence == "full_line"
        assert res.bracket_resolution > 0

    def test_constant_claim(self):
        p = make_problem([0.4, 0.6], [2.0, 3.0], [1.5, 1.5], ed.log_profile(1.0, 2.0))
        assert ed.clear(p).selected == 1.5

    def test_liquidity_capped(self):
        # risk-neutral half-line market whose tilted value exceeds the capacity
        p = make_problem([0.5, 0.5], [0.5, 0.5], [2.0, 3.2], ed.log_profile(0.0, 0.5))
        res = ed.clear(p)
        assert res.existence == "liquidity_capped"
        assert res.selected == pytest.approx(2.5)
        assert res.roots == ()
        assert res.diagnosis == "boundary_fails"

    def test_liquidity_cap_theta_positive_below_cap(self):
        p = make_problem([0.5, 0.5], [0.5, 0.5], [2.0, 3.2], ed.log_profile(0.0, 0.5))
        b = p.ess_inf_xz
        for v in np.linspace(p.ess_inf_z, b - 1e-9, 37):
            assert ed.theta(p, float(v)) > 0.0

    def test_bounds_hold(self, rng):
        for _ in range(30):
            p = random_problem(rng)
            res = ed.clear(p)
            assert p.ess_inf_z - 1e-12 <= res.selected <= p.ess_sup_z + 1e-12


class TestOptimizationRepresentation:
    def test_supremum_form_under_certificate(self, rng):
        # sup{v >= ess inf Z : theta(v) >= 0, feasible} equals the selected price
        for _ in range(15):
            p = random_problem(rng, profile_kind="log")
            if not p.certificates:
                continue
            res = ed.clear(p)
            lo = p.ess_inf_z
            b = p.ess_inf_xz
            hi = min(p.ess_sup_z, b - 1e-9 * max(1.0, abs(b)))
            grid = np.linspace(lo, hi, 20_001)
            th = p._theta_grid_scaled(grid)
            feasible = grid[th >= 0.0]
            sup_v = float(feasible.max()) if feasible.size else res.selected
            if res.existence == "liquidity_capped":
                sup_v = b
            assert res.selected == pytest.approx(sup_v, abs=2 * (hi - lo) / 20_000 + 1e-9)


class TestRuinLimit:
    def _base(self):
        return make_problem(
            [0.3, 0.4, 0.3], [4.0, 4.0, 4.0], [1.0, 1.4, 2.0], ed.log_profile(1.0, 4.0)
        )

    def test_constant_claim(self):
        p = make_problem([0.3, 0.7], [4.0, 4.0], [1.5, 1.5], ed.log_profile(1.0, 4.0))
        prices = ed.ruin_limit_price(p, [0.5, 0.9, 0.99])
        assert np.allclose(prices, 1.5, atol=1e-9)

    def test_nondecreasing_and_convergent(self):
        p = self._base()
        ps = [0.9, 0.99, 0.999, 1 - 1e-4, 1 - 1e-5]
        prices = ed.ruin_limit_price(p, ps)
        assert all(b >= a - 1e-9 for a, b in zip(prices, prices[1:]))
        assert prices[-1] == pytest.approx(ed.clear(p).selected, abs=1e-3)

    def test_product_space_masses(self):
        p = self._base()
        prod = ed.bernoulli_ruin_product(p, 0.9)
        assert prod.space.size == 6
        assert prod.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert prod.ess_inf_xz == pytest.approx(p.ess_inf_xz)

    def test_preconditions(self):
        full_line = make_problem([0.5, 0.5], [1.0, 2.0], [0.0, 1.0], ed.linear_profile(1.0))
        with pytest.raises(ValidationError):
            ed.ruin_limit_price(full_line, [0.9, 0.99])
        p = self._base()
        with pytest.raises(ValidationError):
            ed.ruin_limit_price(p, [0.99, 0.9])
        with pytest.raises(ValidationError):
            ed.ruin_limit_price(p, [0.9, 1.0])
        # joint worst-case failure: X and Z minimized in different scenarios
        bad = make_problem([0.5, 0.5], [4.0, 5.0], [1.0, 0.5], ed.log_profile(1.0, 4.0))
        with pytest.raises(ValidationError, match="joint worst-case"):
            ed.ruin_limit_price(bad, [0.9, 0.99])


class TestInvariantSpotChecks:
    def test_translativity(self, rng):
        for _ in range(10):
            p = random_problem(rng, profile_kind="linear")
            c = float(rng.uniform(-1.0, 1.0))
            # rebuild on the canonical arrays so (weight, x, z) stay paired
            space = ed.ScenarioSpace(p.weights)
            shifted = ed.ClearingProblem(
                ed.RandomVariable(space, p.x),
                ed.RandomVariable(space, p.z + c),
                p.profile,
            )
            assert ed.clear(shifted).selected - ed.clear(p).selected == pytest.approx(
                c, abs=1e-9
            )

    def test_law_invariance_bitwise(self, rng):
        space = ed.ScenarioSpace([0.1, 0.2, 0.3, 0.4])
        x = ed.RandomVariable(space, [4.0, 5.0, 4.5, 6.0])
        z = ed.RandomVariable(space, [1.0, 0.5, 2.0, 1.5])
        prof = ed.log_profile(0.8, x_ref=4.0)
        base = ed.clear(ed.ClearingProblem(x, z, prof)).selected
        for _ in range(5):
            perm = rng.permutation(4)
            space_p = ed.ScenarioSpace(space.weights[perm])
            xp = ed.RandomVariable(space_p, x.values[perm])
            zp = ed.RandomVariable(space_p, z.values[perm])
            assert ed.clear(ed.ClearingProblem(xp, zp, prof)).selected == base
