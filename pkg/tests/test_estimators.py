import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discate import estimators as est
from discate.checks import equivalence_suite, naive_second_order, oracle_suite
from discate.model import ModelClassParams, ModelSpec, population_estimands
from discate.sampling import Dataset, DatasetSampler, SeedSpec, draw_stats_batch, tabulate

TWO_ROWS = Dataset.from_records([(1, 1, 1), (1, 0, 0)], d=1)


@st.composite
def datasets(draw, max_d=6, max_n=30):
    d = draw(st.integers(1, max_d))
    n = draw(st.integers(1, max_n))
    ints = lambda lo, hi: st.lists(st.integers(lo, hi), min_size=n, max_size=n)  # noqa: E731
    return Dataset(d=d, x=draw(ints(1, d)), a=draw(ints(0, 1)), y=draw(ints(0, 1)))


class TestDiv00:
    def test_zero_over_zero(self):
        np.testing.assert_array_equal(est.div00([0.0, 1.0], [0.0, 2.0]), [0.0, 0.5])

    def test_nonzero_over_zero_raises(self):
        with pytest.raises(ZeroDivisionError):
            est.div00(1.0, 0.0)


class TestNuisances:
    def test_d1(self, d1):
        nu = est.empirical_nuisances(d1)
        np.testing.assert_array_equal(nu.pi_hat, [0.5, 0.5])
        np.testing.assert_array_equal(nu.mu1_hat, [1.0, 0.0])
        np.testing.assert_array_equal(nu.mu0_hat, [0.0, 1.0])
        np.testing.assert_array_equal(nu.p_hat, [0.5, 0.5])

    def test_d2_one_armed_categories(self, d2):
        nu = est.empirical_nuisances(d2)
        np.testing.assert_array_equal(nu.pi_hat, [1.0, 0.0])
        np.testing.assert_array_equal(nu.mu1_hat, [0.5, 0.0])
        np.testing.assert_array_equal(nu.mu0_hat, [0.0, 1.0])
        assert nu.undefined == {"empty_categories": 0, "no_treated": 1, "no_untreated": 1}

    def test_empty_category(self):
        nu = est.empirical_nuisances(Dataset.from_records([(1, 1, 1)], d=2))
        for arr in (nu.pi_hat, nu.mu1_hat, nu.mu0_hat, nu.p_hat):
            assert arr[1] == 0.0

    def test_mu_hat_is_category_mean(self, d2):
        nu = est.empirical_nuisances(d2)
        np.testing.assert_allclose(nu.mu_hat, [0.5, 1.0])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            est.external_nuisances([1.5], [0.0], [0.0], [1.0])


class TestPlugin:
    def test_d1(self, d1):
        assert est.plugin_ate(tabulate(d1)).value == 0.0

    def test_d2(self, d2):
        res = est.plugin_ate(tabulate(d2))
        assert res.diagnostics["psi1"] == pytest.approx(1 / 3)
        assert res.diagnostics["psi0"] == pytest.approx(1 / 3)
        assert res.value == pytest.approx(0.0)

    def test_compact_stats_give_same_value(self, d2):
        assert est.plugin_ate(tabulate(d2, compact=True)).value == est.plugin_ate(tabulate(d2)).value

    @given(datasets())
    @settings(max_examples=200, deadline=None)
    def test_all_ones_outcome_formula(self, data):
        data = Dataset(d=data.d, x=data.x, a=data.a, y=np.ones(data.n, dtype=int))
        s = tabulate(data)
        p_hat = s.count_x / s.n
        expected = np.sum(p_hat * ((s.count_x_treated > 0).astype(float)
                                   - (s.count_x_treated < s.count_x).astype(float)))
        value = est.plugin_ate(s).value
        assert value == pytest.approx(expected, abs=1e-12)
        assert -1.0 <= value <= 1.0


class TestSampleAverage:
    def test_d1_same_sample(self, d1):
        nu = est.empirical_nuisances(d1)
        assert est.reg_ate(d1, nu).value == 0.0
        assert est.ipw_ate(d1, nu).value == 0.0
        assert est.dr_ate(d1, nu).value == 0.0

    def test_d1_external_propensity(self, d1):
        nu = est.external_nuisances([0.5, 0.5], [0.0, 0.0], [0.0, 0.0], [0.5, 0.5])
        assert est.ipw_ate(d1, nu).value == 0.0

    def test_missing_arm_stays_finite(self):
        data = Dataset.from_records([(1, 1, 1), (2, 1, 0), (2, 1, 1)], d=2)
        nu = est.external_nuisances([1.0, 1.0], [0.6, 0.4], [0.0, 0.0], [0.5, 0.5])
        value = est.dr_ate(data, nu).value
        assert math.isfinite(value)
        # with π̂ = 1 the untreated correction vanishes: reg + treated residuals
        resid = np.mean([1 - 0.6, 0 - 0.4, 1 - 0.4])
        assert value == pytest.approx(est.reg_ate(data, nu).value + resid)

    def test_dimension_mismatch(self, d1):
        with pytest.raises(ValueError):
            est.reg_ate(d1, est.external_nuisances([0.5], [0.5], [0.5], [1.0]))

    @given(datasets(), st.randoms(use_true_random=False))
    @settings(max_examples=200, deadline=None)
    def test_equivalence_and_permutation_invariance(self, data, rnd):
        nu = est.empirical_nuisances(data)
        plugin = est.plugin_ate(tabulate(data)).value
        for fn in (est.reg_ate, est.ipw_ate, est.dr_ate):
            assert abs(fn(data, nu).value - plugin) < 1e-10
        order = list(range(data.n))
        rnd.shuffle(order)
        assert est.plugin_ate(tabulate(data.subset(order))).value == pytest.approx(plugin, abs=1e-14)
        assert -1.0 <= plugin <= 1.0


def test_equivalence_suite_thousand_cases():
    report = equivalence_suite(1000, master_seed=0)
    assert report.cases == 1000 and report.passed, report.failures[:3]


def test_truncation_breaks_equivalence():
    assert not equivalence_suite(50, master_seed=0, truncate=0.1).passed


class TestHomogeneity:
    def test_d1(self, d1):
        res = est.homogeneity_tau(tabulate(d1))
        assert res.value == 0.0 and res.diagnostics["collisions"] == 2

    def test_d2_has_no_collision(self, d2):
        res = est.homogeneity_tau(tabulate(d2))
        assert res.value == 0.0 and res.diagnostics["collisions"] == 0

    def test_weighting_by_category_share(self):
        data = Dataset.from_records(
            [(1, 1, 1), (1, 0, 0), (1, 1, 1), (1, 0, 0), (2, 1, 0), (2, 0, 0)], d=2)
        # τ̂_1 = 1 with weight 4/6, τ̂_2 = 0 with weight 2/6
        assert est.homogeneity_tau(tabulate(data)).value == pytest.approx(2 / 3)

    def test_unbiased_given_collision(self):
        m = ModelSpec.constant(50, pi=0.5, mu1=0.5, mu0=0.25)
        values, reps = [], 0
        for chunk in range(5):
            cx, ct, c1, c0 = draw_stats_batch(m, 200, 20_000, SeedSpec(21, chunk))
            v, coll = est.homogeneity_arrays(cx, ct, c1, c0)
            values.append(v[coll > 0])
            reps += cx.shape[0]
        v = np.concatenate(values)
        assert reps == 100_000 and v.size > 0.99 * reps
        se = v.std(ddof=1) / math.sqrt(v.size)
        assert abs(v.mean() - 0.25) < 4 * se


class TestSecondOrder:
    def test_eta_rho_example(self):
        nu = est.zeroed_nuisances([1.0])
        assert est.second_order_eta(TWO_ROWS, nu).value == pytest.approx(0.5)
        assert est.second_order_rho(TWO_ROWS, nu).value == pytest.approx(0.5)

    def test_missing_mass(self):
        data = Dataset.from_records([(1, 1, 1), (2, 0, 0)], d=2)
        with pytest.raises(ValueError, match="nuisance covariate mass missing"):
            est.second_order_eta(data, est.zeroed_nuisances([1.0, 0.0]))

    def test_psi1_example(self):
        nu = est.external_nuisances([0.5], [0.0], [0.0], [1.0])
        res = est.second_order_ate(TWO_ROWS, nu, arm=1)
        assert res.diagnostics["linear"] == pytest.approx(1.0)
        assert res.diagnostics["u_term"] == pytest.approx(1.0)
        assert res.value == pytest.approx(2.0)

    def test_zero_propensity_rejected(self):
        nu = est.external_nuisances([0.0], [0.0], [0.0], [1.0])
        with pytest.raises(ValueError):
            est.second_order_ate(TWO_ROWS, nu, arm=1)

    def test_contrast_is_difference_of_arms(self):
        nu = est.external_nuisances([0.4], [0.3], [0.6], [1.0])
        both = est.second_order_ate(TWO_ROWS, nu, arm=None).value
        diff = (est.second_order_ate(TWO_ROWS, nu, arm=1).value
                - est.second_order_ate(TWO_ROWS, nu, arm=0).value)
        assert both == pytest.approx(diff, abs=1e-14)

    def test_pair_sum_matches_loop(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(1, 60))
            x = rng.integers(1, 6, n)
            u, v = rng.normal(size=n), rng.normal(size=n)
            assert est.pair_sum(x, u, v) == pytest.approx(est.naive_pair_sum(x, u, v), abs=1e-10)

    def test_oracle_suite(self):
        report = oracle_suite(200, master_seed=0)
        assert report.passed and report.max_error < 1e-10

    def test_naive_oracle_on_example(self):
        nu = est.zeroed_nuisances([1.0])
        assert naive_second_order(TWO_ROWS, nu, "eta") == pytest.approx(0.5)

    def test_psi1_mean_with_true_nuisances(self):
        m = ModelSpec(d=2, p=[0.5, 0.5], pi=[0.5, 0.5], mu1=[0.7, 0.2], mu0=[0.3, 0.6])
        sampler, nu = DatasetSampler(m), est.true_nuisances(m)
        rng = SeedSpec(31, 0).generator()
        vals = np.array([est.second_order_ate(sampler.draw(50, rng), nu, arm=1).value
                         for _ in range(100_000)])
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - population_estimands(m).psi1) < 4 * se


class TestWate:
    def test_ratio(self):
        assert est.wate_hat(1 / 16, 1 / 4, ModelClassParams(0.1)).value == pytest.approx(0.25)

    def test_zero_numerator(self):
        assert est.wate_hat(0.0, 0.3, ModelClassParams(0.1)).value == 0.0

    def test_clamp(self):
        res = est.wate_hat(0.1, 0.01, ModelClassParams(0.3), clamp=True)
        assert res.diagnostics["denominator"] == pytest.approx(0.21)

    def test_unclamped_requires_positive_rho(self):
        with pytest.raises(ValueError):
            est.wate_hat(0.1, 0.0, clamp=False)


class TestInfluenceCI:
    def test_quantile_arithmetic(self):
        lo, hi, _ = est.wald_interval(0.25, 0.01, 0.95)
        assert lo == pytest.approx(0.2304, abs=1e-4) and hi == pytest.approx(0.2696, abs=1e-4)

    def test_constant_influence_values(self):
        data = Dataset.from_records([(1, 1, 1), (1, 0, 1), (2, 1, 1), (2, 0, 1)], d=2)
        res = est.influence_ci(data, est.empirical_nuisances(data))
        assert res.se == 0.0 and res.ci[0] == res.ci[1] == res.value

    def test_value_equals_dr(self, d1):
        nu = est.empirical_nuisances(d1)
        res = est.influence_ci(d1, nu, level=0.9)
        assert res.value == est.dr_ate(d1, nu).value
        assert res.ci[0] <= res.value <= res.ci[1] and res.ci[2] == 0.9

    def test_needs_two_records(self):
        one = Dataset.from_records([(1, 1, 1)], d=1)
        with pytest.raises(ValueError):
            est.influence_ci(one, est.empirical_nuisances(one))
