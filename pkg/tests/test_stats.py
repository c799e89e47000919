import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from linestriper import anova_oneway, bartlett, group_stats, ttest_two_sample
from linestriper.stats import (
    chi_square_sf,
    f_sf,
    regularized_gamma_p,
    regularized_incomplete_beta,
    student_t_quantile,
    student_t_sf,
)


# ----------------------------------------------------------------------
# brute-force oracles: definitional formulas, written independently of
# the implementation (plain loops, no shared helpers)
# ----------------------------------------------------------------------

def brute_mean(xs):
    return sum(xs) / len(xs)


def brute_var(xs):
    m = brute_mean(xs)
    return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def brute_bartlett_statistic(groups):
    k = len(groups)
    ns = [len(g) for g in groups]
    n = sum(ns)
    variances = [brute_var(g) for g in groups]
    sp2 = sum((ni - 1) * vi for ni, vi in zip(ns, variances)) / (n - k)
    num = (n - k) * math.log(sp2) - sum((ni - 1) * math.log(vi) for ni, vi in zip(ns, variances))
    c = 1 + (sum(1 / (ni - 1) for ni in ns) - 1 / (n - k)) / (3 * (k - 1))
    return num / c


def brute_anova_f(groups):
    k = len(groups)
    n = sum(len(g) for g in groups)
    grand = sum(x for g in groups for x in g) / n
    ssb = sum(len(g) * (brute_mean(g) - grand) ** 2 for g in groups)
    ssw = sum(sum((x - brute_mean(g)) ** 2 for x in g) for g in groups)
    return (ssb / (k - 1)) / (ssw / (n - k))


def brute_pooled_t(a, b):
    na, nb = len(a), len(b)
    sp2 = ((na - 1) * brute_var(a) + (nb - 1) * brute_var(b)) / (na + nb - 2)
    return (brute_mean(a) - brute_mean(b)) / math.sqrt(sp2 * (1 / na + 1 / nb))


def random_groups(rng, k, min_n=3, max_n=12):
    return [
        [rng.gauss(rng.uniform(-5, 5), rng.uniform(0.5, 4.0)) for _ in range(rng.randint(min_n, max_n))]
        for _ in range(k)
    ]


class TestOracleEquivalence:
    def test_bartlett_matches_brute_force(self):
        rng = random.Random(42)
        for _ in range(25):
            groups = random_groups(rng, rng.randint(2, 5))
            result = bartlett(groups)
            assert result.statistic == pytest.approx(brute_bartlett_statistic(groups), rel=1e-9)

    def test_anova_matches_brute_force(self):
        rng = random.Random(43)
        for _ in range(25):
            groups = random_groups(rng, rng.randint(2, 5))
            result = anova_oneway(groups)
            assert result.statistic == pytest.approx(brute_anova_f(groups), rel=1e-9)

    def test_ttest_matches_brute_force(self):
        rng = random.Random(44)
        for _ in range(25):
            a, b = random_groups(rng, 2)
            result = ttest_two_sample(a, b)
            assert result.statistic == pytest.approx(brute_pooled_t(a, b), rel=1e-9)

    def test_p_values_match_scipy(self):
        rng = random.Random(45)
        for _ in range(20):
            groups = random_groups(rng, 3)
            assert bartlett(groups).p_value == pytest.approx(
                scipy_stats.bartlett(*groups).pvalue, rel=1e-7, abs=1e-12)
            assert anova_oneway(groups).p_value == pytest.approx(
                scipy_stats.f_oneway(*groups).pvalue, rel=1e-7, abs=1e-12)
            assert ttest_two_sample(groups[0], groups[1]).p_value == pytest.approx(
                scipy_stats.ttest_ind(groups[0], groups[1]).pvalue, rel=1e-7, abs=1e-12)

    def test_f_equals_t_squared_on_two_groups(self):
        rng = random.Random(46)
        for _ in range(25):
            a, b = random_groups(rng, 2)
            f = anova_oneway([a, b])
            t = ttest_two_sample(a, b)
            assert f.statistic == pytest.approx(t.statistic**2, rel=1e-9)
            assert f.p_value == pytest.approx(t.p_value, rel=1e-9)


class TestGroupStats:
    def test_degenerate_constant_samples(self):
        gs = group_stats([4.2, 4.2, 4.2])
        assert gs.mean == 4.2
        assert gs.sample_variance == 0.0
        assert gs.ci95 == (4.2, 4.2)

    def test_hand_computed_interval(self):
        gs = group_stats([1.0, 2.0, 3.0, 4.0, 5.0])
        assert gs.mean == 3.0
        assert gs.sample_variance == pytest.approx(2.5)
        # t quantile for 4 df at 97.5%: 2.7764
        assert gs.ci95[0] == pytest.approx(1.0368, abs=5e-4)
        assert gs.ci95[1] == pytest.approx(4.9632, abs=5e-4)

    def test_interval_contains_mean(self):
        rng = random.Random(47)
        samples = [rng.gauss(0.8, 0.05) for _ in range(28)]
        gs = group_stats(samples)
        assert gs.ci95[0] <= gs.mean <= gs.ci95[1]

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            group_stats([1.0])


class TestBartlett:
    def test_identical_groups(self):
        g = [1.0, 2.0, 3.0, 4.0]
        result = bartlett([g, list(g)])
        assert result.statistic == pytest.approx(0.0, abs=1e-12)
        assert result.p_value == pytest.approx(1.0)

    def test_unequal_spread_detected(self):
        result = bartlett([[1.0, 2.0, 3.0, 4.0], [10.0, 20.0, 30.0, 40.0]])
        assert result.statistic == pytest.approx(
            brute_bartlett_statistic([[1, 2, 3, 4], [10, 20, 30, 40]]), rel=1e-9)
        assert result.p_value < 0.05

    def test_statistic_non_negative_on_equal_variances(self):
        rng = random.Random(48)
        groups = [[rng.gauss(i, 1.0) for _ in range(8)] for i in range(3)]
        assert bartlett(groups).statistic >= 0.0

    def test_zero_variance_group_rejected(self):
        with pytest.raises(ValueError):
            bartlett([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])


class TestAnova:
    def test_equal_means(self):
        groups = [[1.0, 2.0, 3.0], [2.0, 1.0, 3.0], [3.0, 2.0, 1.0]]
        result = anova_oneway(groups)
        assert result.statistic == pytest.approx(0.0, abs=1e-12)
        assert result.p_value == pytest.approx(1.0)

    def test_hand_computed_example(self):
        result = anova_oneway([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]])
        assert result.statistic == pytest.approx(3.0, rel=1e-12)
        assert result.degrees_of_freedom == (2.0, 6.0)
        assert result.p_value == pytest.approx(0.125, abs=1e-9)

    def test_all_zero_within_variance_rejected(self):
        with pytest.raises(ValueError):
            anova_oneway([[1.0, 1.0], [2.0, 2.0]])


class TestTTest:
    def test_identical_samples(self):
        result = ttest_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_hand_computed_example(self):
        result = ttest_two_sample([1.0, 2.0, 3.0, 4.0, 5.0], [2.0, 3.0, 4.0, 5.0, 6.0])
        assert result.statistic == pytest.approx(-1.0, rel=1e-12)
        assert result.degrees_of_freedom == 8.0
        assert result.p_value == pytest.approx(0.3466, abs=5e-5)

    def test_degenerate_equal_constants(self):
        result = ttest_two_sample([2.0, 2.0], [2.0, 2.0])
        assert result.p_value == 1.0

    def test_degenerate_distinct_constants(self):
        result = ttest_two_sample([2.0, 2.0], [3.0, 3.0])
        assert result.p_value == 0.0

    def test_welch_variant(self):
        a = [1.0, 2.0, 3.0, 4.0]
        b = [10.0, 30.0, 20.0, 25.0, 15.0]
        result = ttest_two_sample(a, b, welch=True)
        reference = scipy_stats.ttest_ind(a, b, equal_var=False)
        assert result.statistic == pytest.approx(reference.statistic, rel=1e-9)
        assert result.p_value == pytest.approx(reference.pvalue, rel=1e-7)


class TestInvariances:
    @settings(max_examples=50)
    @given(
        shift=st.floats(-1e3, 1e3),
        seed=st.integers(0, 2**16),
    )
    def test_location_invariance(self, shift, seed):
        rng = random.Random(seed)
        groups = random_groups(rng, 3, min_n=4, max_n=8)
        shifted = [[x + shift for x in g] for g in groups]
        assert bartlett(shifted).statistic == pytest.approx(
            bartlett(groups).statistic, rel=1e-6, abs=1e-10)
        assert anova_oneway(shifted).statistic == pytest.approx(
            anova_oneway(groups).statistic, rel=1e-6, abs=1e-10)
        assert ttest_two_sample(shifted[0], shifted[1]).statistic == pytest.approx(
            ttest_two_sample(groups[0], groups[1]).statistic, rel=1e-6, abs=1e-10)

    @settings(max_examples=50)
    @given(
        scale=st.floats(1e-3, 1e3),
        seed=st.integers(0, 2**16),
    )
    def test_scale_invariance(self, scale, seed):
        rng = random.Random(seed)
        groups = random_groups(rng, 3, min_n=4, max_n=8)
        scaled = [[x * scale for x in g] for g in groups]
        for fn in (bartlett, anova_oneway):
            assert fn(scaled).statistic == pytest.approx(fn(groups).statistic, rel=1e-10, abs=1e-10)
            assert fn(scaled).p_value == pytest.approx(fn(groups).p_value, rel=1e-10, abs=1e-10)
        assert ttest_two_sample(scaled[0], scaled[1]).p_value == pytest.approx(
            ttest_two_sample(groups[0], groups[1]).p_value, rel=1e-10, abs=1e-10)

    def test_p_values_in_unit_interval(self):
        rng = random.Random(49)
        for _ in range(20):
            groups = random_groups(rng, 3)
            for p in (bartlett(groups).p_value, anova_oneway(groups).p_value,
                      ttest_two_sample(groups[0], groups[1]).p_value):
                assert 0.0 <= p <= 1.0


# published table values at standard quantiles
T_975 = {1: 12.7062, 2: 4.3027, 4: 2.7764, 5: 2.5706, 8: 2.3060, 10: 2.2281, 30: 2.0423}
CHI2_95 = {1: 3.8415, 2: 5.9915, 3: 7.8147, 5: 11.0705, 10: 18.3070}
F_95 = {(1, 1): 161.4476, (2, 6): 5.1433, (5, 10): 3.3258, (10, 20): 2.3479}


class TestSpecialFunctions:
    @pytest.mark.parametrize("df,t", sorted(T_975.items()))
    def test_t_quantiles_match_tables(self, df, t):
        assert student_t_quantile(0.975, df) == pytest.approx(t, abs=1e-4)
        assert student_t_sf(t, df) == pytest.approx(0.025, abs=5e-5)

    @pytest.mark.parametrize("df,q", sorted(CHI2_95.items()))
    def test_chi_square_tails_match_tables(self, df, q):
        assert chi_square_sf(q, df) == pytest.approx(0.05, abs=5e-5)

    @pytest.mark.parametrize("dfs,q", sorted(F_95.items()))
    def test_f_tails_match_tables(self, dfs, q):
        assert f_sf(q, dfs[0], dfs[1]) == pytest.approx(0.05, abs=5e-5)

    def test_quantile_accuracy_against_scipy(self):
        for p in (0.6, 0.9, 0.975, 0.995):
            for df in (1, 2, 5, 17, 120):
                assert student_t_quantile(p, df) == pytest.approx(
                    scipy_stats.t.ppf(p, df), abs=1e-8)
        # far tails: the CDF is so flat that only relative accuracy is meaningful
        for df in (1, 2, 5):
            assert student_t_quantile(0.9999, df) == pytest.approx(
                scipy_stats.t.ppf(0.9999, df), rel=1e-9)

    def test_beta_closed_form(self):
        # I_x(3, 1) = x^3
        assert regularized_incomplete_beta(3.0, 1.0, 0.5) == pytest.approx(0.125, rel=1e-12)

    def test_gamma_closed_form(self):
        # P(1, x) = 1 - exp(-x)
        assert regularized_gamma_p(1.0, 2.0) == pytest.approx(1.0 - math.exp(-2.0), rel=1e-12)

    def test_tails_against_scipy_sweep(self):
        for x in (0.1, 1.0, 3.0, 10.0, 40.0):
            for df in (1, 3, 9, 25):
                assert chi_square_sf(x, df) == pytest.approx(scipy_stats.chi2.sf(x, df), rel=1e-9, abs=1e-14)
                assert student_t_sf(x, df) == pytest.approx(scipy_stats.t.sf(x, df), rel=1e-9, abs=1e-14)
                assert f_sf(x, df, df + 2) == pytest.approx(scipy_stats.f.sf(x, df, df + 2), rel=1e-9, abs=1e-14)
