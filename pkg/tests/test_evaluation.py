import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from bps.densities import ForecastDensity
from bps.evaluation import density_value, lpdr, mc_empirical_r2, msfe

from oracles import schur_complete_r2


class TestMsfe:
    def test_perfect_forecasts(self):
        y = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(msfe(y, y), np.zeros(3))

    def test_constant_errors(self):
        out = msfe(np.array([1.0, 1.0, 1.0]), np.zeros(3))
        np.testing.assert_allclose(out, [1.0, 1.0, 1.0])

    def test_hand_mean_of_squares(self):
        out = msfe(np.array([0.0, 2.0]), np.zeros(2))
        np.testing.assert_allclose(out, [0.0, 2.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            msfe(np.array([]), np.array([]))

    @settings(max_examples=30, deadline=None)
    @given(seed=hst.integers(0, 9999), T=hst.integers(1, 40))
    def test_monotone_under_error_domination(self, seed, T):
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(T)
        bigger = e * rng.uniform(1.0, 3.0, size=T)
        small = msfe(e, np.zeros(T))
        large = msfe(bigger, np.zeros(T))
        assert np.all(large >= small - 1e-12)

    def test_order_invariance_of_final_value(self):
        rng = np.random.default_rng(8)
        e = rng.standard_normal(25)
        perm = rng.permutation(25)
        assert msfe(e, np.zeros(25))[-1] == pytest.approx(
            msfe(e[perm], np.zeros(25))[-1])


class TestLpdr:
    def test_baseline_against_itself_is_zero(self):
        v = np.array([0.2, 0.5, 1.3])
        np.testing.assert_array_equal(lpdr(v, v), np.zeros(3))

    def test_log_identity(self):
        base = np.ones(2)
        np.testing.assert_allclose(lpdr(np.e * base, base), [1.0, 2.0])

    def test_worse_than_baseline_is_negative(self):
        # a method assigning lower density than the baseline accumulates
        # a negative ratio
        out = lpdr(np.array([0.1, 0.1]), np.array([0.4, 0.4]))
        assert np.all(out < 0)

    def test_nonpositive_density_rejected(self):
        with pytest.raises(ValueError):
            lpdr(np.array([0.0]), np.array([1.0]))


class TestDensityValue:
    def test_standard_normal_closed_form(self):
        assert density_value(ForecastDensity.normal(0, 1), 0.0) == pytest.approx(
            0.39894, abs=1e-5)

    def test_kde_of_normal_draws(self):
        rng = np.random.default_rng(12)
        val = density_value(rng.standard_normal(100_000), 0.0)
        assert val == pytest.approx(0.399, abs=0.02)

    def test_huge_dof_t_close_to_normal(self):
        t_val = density_value(ForecastDensity.student_t(0, 1, dof=1e6), 0.3)
        n_val = density_value(ForecastDensity.normal(0, 1), 0.3)
        assert t_val == pytest.approx(n_val, abs=1e-3)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            density_value(np.array([]), 0.0)


class TestMcEmpiricalR2:
    def test_exact_linear_dependence(self):
        rng = np.random.default_rng(0)
        x1 = rng.standard_normal((5000, 3, 1))
        draws = np.concatenate([x1, 2.0 * x1], axis=2)
        dep = mc_empirical_r2(draws)
        np.testing.assert_allclose(dep.paired, 1.0)
        np.testing.assert_allclose(dep.complete, 1.0, atol=1e-8)

    def test_independent_columns_near_zero(self):
        rng = np.random.default_rng(1)
        dep = mc_empirical_r2(rng.standard_normal((10_000, 4, 3)))
        assert dep.complete.max() < 0.05
        assert dep.paired.max() < 0.05
        assert not dep.singular.any()

    def test_known_covariance_matches_schur_oracle(self):
        rng = np.random.default_rng(2)
        A = np.array([[1.0, 0.0, 0.0],
                      [0.6, 0.8, 0.0],
                      [0.3, -0.4, 0.9]])
        Sigma = A @ A.T
        z = rng.standard_normal((400_000, 1, 3)) @ A.T
        dep = mc_empirical_r2(z)
        for j in range(3):
            assert dep.complete[0, j] == pytest.approx(
                schur_complete_r2(Sigma, j), abs=0.01)

    def test_complete_dominates_paired(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((4, 4))
        draws = rng.standard_normal((4000, 6, 4)) @ A.T
        dep = mc_empirical_r2(draws)
        for t in range(6):
            for idx, (i, j) in enumerate(dep.pair_labels):
                assert dep.complete[t, i] >= dep.paired[t, idx] - 1e-9
                assert dep.complete[t, j] >= dep.paired[t, idx] - 1e-9

    def test_degenerate_column_flags_singularity(self):
        rng = np.random.default_rng(4)
        draws = rng.standard_normal((100, 2, 2))
        draws[:, 0, 1] = 5.0  # zero variance at t=0
        dep = mc_empirical_r2(draws)
        assert dep.singular[0] and not dep.singular[1]
        assert dep.complete[0, 1] == 1.0

    def test_needs_two_draws(self):
        with pytest.raises(ValueError):
            mc_empirical_r2(np.zeros((1, 3, 2)))
