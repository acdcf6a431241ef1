import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discate import bounds
from discate.estimators import plugin_arms
from discate.model import ModelSpec
from discate.sampling import SeedSpec, draw_stats_batch, uniform_sim_model


class TestExactBias:
    def test_single_category(self):
        m = ModelSpec(d=1, p=[1.0], pi=[0.5], mu1=[1.0], mu0=[0.0])
        b1, b0, b = bounds.exact_bias(m, 3)
        assert b1 == pytest.approx(-0.125) and b0 == 0.0 and b == pytest.approx(-0.125)

    def test_null_outcome(self):
        m = ModelSpec(d=3, p=[0.2, 0.3, 0.5], pi=[0.1, 0.5, 0.9], mu1=[0, 0, 0], mu0=[0, 0, 0])
        assert bounds.exact_bias(m, 10) == (0.0, 0.0, 0.0)

    def test_matches_monte_carlo(self):
        m = uniform_sim_model(10)
        b1, b0, _ = bounds.exact_bias(m, 100)
        cx, ct, c1, c0 = draw_stats_batch(m, 100, 200_000, SeedSpec(41, 0))
        psi1, psi0 = plugin_arms(cx, ct, c1, c0)
        for est, truth, bias in ((psi1, 0.5, b1), (psi0, 0.25, b0)):
            se = est.std(ddof=1) / math.sqrt(est.size)
            assert abs((est.mean() - truth) - bias) < 4 * se

    @given(st.integers(1, 20), st.integers(1, 200), st.floats(0.05, 0.45), st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_within_worst_case_upper(self, d, n, eps, seed):
        rng = np.random.default_rng(seed)
        m = ModelSpec(d=d, p=rng.dirichlet(np.ones(d)), pi=rng.uniform(eps, 1 - eps, d),
                      mu1=rng.random(d), mu0=rng.random(d))
        b1, _, _ = bounds.exact_bias(m, n)
        assert abs(b1) <= bounds.worst_case_bias_bounds(eps, n, d)[1] + 1e-12


class TestWorstCase:
    def test_upper_example(self):
        assert bounds.worst_case_bias_bounds(0.1, 100, 10)[1] == pytest.approx(0.9)

    def test_linear_lower_gate(self):
        assert bounds.worst_case_bias_bounds(0.25, 4, 10)[2] is None
        assert bounds.worst_case_bias_bounds(0.25, 5, 10)[2] is not None

    def test_lower_below_upper_on_grid(self):
        for eps in np.arange(0.05, 0.46, 0.05):
            for n in (10, 100, 1000, 10_000):
                for d in (10, 100, 1000, 10_000):
                    lo, up, _ = bounds.worst_case_bias_bounds(float(eps), n, d)
                    assert lo <= up

    def test_epsilon_domain(self):
        with pytest.raises(ValueError):
            bounds.worst_case_bias_bounds(0.5, 10, 10)


class TestVariance:
    def test_example(self):
        assert bounds.plugin_variance_bound(0.5, 100) == pytest.approx(0.08 + 0.04 + 2 / 99)
        assert bounds.plugin_variance_bound(0.5, 100) == pytest.approx(0.14020, abs=1e-5)

    def test_monotone_in_n(self):
        vals = [bounds.plugin_variance_bound(0.2, n) for n in range(2, 2000, 7)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert bounds.plugin_variance_bound(0.2, 10**9) < 1e-6

    def test_needs_two(self):
        with pytest.raises(ValueError):
            bounds.plugin_variance_bound(0.2, 1)

    def test_mse_combines_parts(self):
        up = bounds.worst_case_bias_bounds(0.2, 50, 5)[1]
        assert bounds.plugin_mse_bound(0.2, 50, 5) == pytest.approx(up**2 + bounds.plugin_variance_bound(0.2, 50))


class TestCollision:
    def test_constants(self):
        e = 0.25
        c1_ref = -math.log(math.exp(-0.0625) + math.exp(-0.1875) - math.exp(-0.25))
        c1, c2, c = bounds.collision_constants(e)
        assert c1 == pytest.approx(c1_ref) and c1 > 0
        assert c2 == pytest.approx(c1_ref * e / (2 * math.log(2)))
        assert c == min(c2 / 2, e / 12)
        assert 0 < bounds.no_collision_bound(e, 30, 900) < 2

    def test_tends_to_two(self):
        vals = [bounds.no_collision_bound(0.25, 100, d) for d in (10**3, 10**6, 10**12)]
        assert vals[0] < vals[1] < vals[2] < 2 and vals[2] == pytest.approx(2.0, abs=1e-6)

    def test_homogeneity_example(self):
        c = bounds.collision_constants(0.1)[2]
        assert bounds.homogeneity_bias_bound(0.0, 0.1, 10**4, 10**5) == pytest.approx(2 * math.exp(-c * 1000))

    def test_vacuous_flag(self):
        rows = bounds.bound_table(0.1, 100, 10, sigma_n=2.0)
        hb = next(r for r in rows if r.name == "homogeneity_bias")
        assert hb.value >= 2 and hb.vacuous

    def test_sigma_domain(self):
        with pytest.raises(ValueError):
            bounds.homogeneity_bias_bound(2.5, 0.1, 10, 10)


class TestRates:
    def test_curve_examples(self):
        assert bounds.rate_curve(1.5, 1.0, 10**4) == pytest.approx(0.015)
        assert bounds.rate_curve(0.5, 1.0, 1000) == pytest.approx(0.01581, abs=1e-5)
        assert bounds.rate_curve(0.7, 2.0, 12345) == pytest.approx(0.7)

    def test_curve_requires_positive_constant(self):
        with pytest.raises(ValueError):
            bounds.rate_curve(0.0, 1.0, 10)

    def test_second_order_templates(self):
        assert bounds.second_order_mse_rate(100, 1000, xi=0.0) == pytest.approx(1000 / 1e4 + 0.01)
        assert bounds.second_order_mse_rate(100, 1000, 0.5, "empirical") == pytest.approx(0.25 + 0.1 + 0.01)

    def test_xi(self):
        assert bounds.xi_n([0.5, 0.5], [0.25, 0.75]) == pytest.approx(1.0)
        assert bounds.xi_n([0.5, 0.5], [1.0, 0.0]) == math.inf

    def test_templates_not_certified(self):
        rows = bounds.bound_table(0.1, 100, 1000, sigma_n=0.0)
        flags = {r.name: r.certified for r in rows}
        assert not flags["homogeneity_variance_rate"] and not flags["second_order_mse_rate"]
        assert flags["plugin_variance"] and flags["no_collision_probability"]
