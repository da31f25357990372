import numpy as np
import pytest

from specsl import (
    MixtureTarget,
    energy_statistic,
    energy_test,
    exchangeability_test,
    fit_scaling,
    ks_per_dim_test,
    sample_increment_blocks,
)


def _two_point():
    return MixtureTarget.points([0.5, 0.5], [[1.0], [-1.0]])


class TestEnergyStatistic:
    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.normal(size=(80, 3))
            b = rng.normal(size=(60, 3))
            assert energy_statistic(a, b) >= -1e-12

    def test_zero_for_identical_samples(self):
        a = np.random.default_rng(1).normal(size=(120, 2))
        assert abs(energy_statistic(a, a.copy())) < 1e-10

    def test_positive_for_shifted_samples(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(100, 2))
        b = rng.normal(size=(100, 2)) + 2.0
        assert energy_statistic(a, b) > 0.5

    def test_coordinate_permutation_invariance(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(50, 4))
        b = rng.normal(size=(50, 4))
        perm = [2, 0, 3, 1]
        before = energy_statistic(a, b)
        after = energy_statistic(a[:, perm], b[:, perm])
        assert abs(before - after) < 1e-10

    def test_one_dimensional_input_promoted(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=200)
        b = rng.normal(size=150)
        assert energy_statistic(a, b) == energy_statistic(a[:, None], b[:, None])


class TestEnergyTest:
    def test_minimum_sample_size(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ValueError):
            energy_test(rng.normal(size=(50, 1)), rng.normal(size=(200, 1)))

    def test_null_calibration(self):
        # Exact permutation test: p-values uniform under the null. 400
        # trials at level 0.05 should reject about 20 times.
        rng = np.random.default_rng(6)
        rejections = 0
        trials = 400
        for trial in range(trials):
            a = rng.normal(size=(100, 1))
            b = rng.normal(size=(100, 1))
            rep = energy_test(a, b, n_perm=99, seed=trial)
            if rep.p_value <= 0.05:
                rejections += 1
        # 4-sigma band around 20.
        assert 3 <= rejections <= 38

    def test_power_against_large_shift(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(150, 1))
        b = rng.normal(size=(150, 1)) + 3.0
        rep = energy_test(a, b, n_perm=1999, seed=0)
        assert rep.p_value < 0.001

    def test_add_one_pvalue_floor(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(120, 1))
        b = rng.normal(size=(120, 1)) + 5.0
        rep = energy_test(a, b, n_perm=500, seed=0)
        assert rep.p_value == pytest.approx(1.0 / 501.0)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(100, 2))
        b = rng.normal(size=(100, 2))
        r1 = energy_test(a, b, n_perm=200, seed=4)
        r2 = energy_test(a, b, n_perm=200, seed=4)
        assert r1.p_value == r2.p_value
        assert r1.statistic == r2.statistic

    def test_report_fields(self):
        rng = np.random.default_rng(10)
        rep = energy_test(rng.normal(size=(100, 1)), rng.normal(size=(110, 1)))
        assert rep.n_a == 100
        assert rep.n_b == 110
        assert rep.method == "energy-permutation"


class TestKsPerDim:
    def test_same_distribution_passes(self):
        rng = np.random.default_rng(11)
        rep = ks_per_dim_test(rng.normal(size=(500, 3)), rng.normal(size=(500, 3)))
        assert rep.p_value > 0.01

    def test_shift_detected(self):
        rng = np.random.default_rng(12)
        a = rng.normal(size=(500, 3))
        b = rng.normal(size=(500, 3))
        b[:, 1] += 1.0
        rep = ks_per_dim_test(a, b)
        assert rep.p_value < 0.001


class TestFitScaling:
    def test_exact_power_law(self):
        points = [(K, 3.7 * K**0.66) for K in (100, 300, 1000, 3000, 10000)]
        fit = fit_scaling(points)
        assert abs(fit.slope - 0.66) < 1e-12
        assert abs(fit.r_squared - 1.0) < 1e-12
        assert abs(fit.intercept - np.log(3.7)) < 1e-10

    def test_amplitude_rescale_leaves_slope(self):
        points = [(K, 2.0 * K**0.5) for K in (128, 256, 512, 1024, 4096)]
        scaled = [(K, 100.0 * v) for K, v in points]
        assert abs(fit_scaling(points).slope - fit_scaling(scaled).slope) < 1e-12

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            fit_scaling([(100, 10.0), (1000, 50.0), (10000, 200.0)])

    def test_narrow_span_rejected(self):
        with pytest.raises(ValueError):
            fit_scaling([(100, 1.0), (120, 1.1), (140, 1.2), (160, 1.3), (180, 1.4)])

    def test_points_recorded_in_log_space(self):
        points = [(K, float(K)) for K in (10, 100, 1000, 10_000, 100_000)]
        fit = fit_scaling(points)
        assert len(fit.points) == 5
        logk, logv = fit.points[0]
        assert abs(logk - np.log(10)) < 1e-12
        assert abs(logv - np.log(10)) < 1e-12


class TestIncrementBlocks:
    def test_shape(self):
        rng = np.random.default_rng(13)
        blocks = sample_increment_blocks(_two_point(), 1.0, 0.5, 4, 200, rng)
        assert blocks.shape == (200, 4, 1)

    def test_moments(self):
        # Increment = eta * x + Brownian step: mean eta*E[x], var
        # eta^2 Var(x) + eta.
        rng = np.random.default_rng(14)
        eta = 0.5
        blocks = sample_increment_blocks(_two_point(), 1.0, eta, 3, 40_000, rng)
        flat = blocks.reshape(-1)
        assert abs(flat.mean()) < 0.02
        want_var = eta**2 * 1.0 + eta
        assert abs(flat.var() - want_var) < 0.03

    def test_blocks_correlated_through_shared_draw(self):
        # All blocks share x*, so cov(Delta_i, Delta_j) = eta^2 Var(x) > 0.
        rng = np.random.default_rng(15)
        eta = 1.0
        blocks = sample_increment_blocks(_two_point(), 0.5, eta, 2, 40_000, rng)
        cov = np.cov(blocks[:, 0, 0], blocks[:, 1, 0])[0, 1]
        assert abs(cov - eta**2 * 1.0) < 0.05

    def test_double_variance_control(self):
        rng = np.random.default_rng(16)
        eta = 0.5
        blocks = sample_increment_blocks(
            _two_point(), 1.0, eta, 3, 40_000, rng, double_variance_at=1
        )
        var_normal = blocks[:, 0, 0].var() - eta**2
        var_doubled = blocks[:, 1, 0].var() - eta**2
        assert abs(var_normal - eta) < 0.03
        assert abs(var_doubled - 2 * eta) < 0.05

    def test_validation(self):
        rng = np.random.default_rng(17)
        with pytest.raises(ValueError):
            sample_increment_blocks(_two_point(), 1.0, 0.5, 1, 100, rng)
        with pytest.raises(ValueError):
            sample_increment_blocks(_two_point(), 1.0, -0.5, 3, 100, rng)
        with pytest.raises(ValueError):
            sample_increment_blocks(_two_point(), -1.0, 0.5, 3, 100, rng)


class TestExchangeabilityTest:
    def test_null_passes_typically(self):
        rep = exchangeability_test(_two_point(), 1.0, 0.5, 4, 600, seed=100)
        assert rep.p_value > 0.01

    def test_violation_detected(self):
        rep = exchangeability_test(
            _two_point(), 1.0, 0.5, 4, 1500, seed=101, n_perm=999, double_variance_at=1
        )
        assert rep.p_value < 0.01

    def test_identity_permutation_rejected(self):
        with pytest.raises(ValueError):
            exchangeability_test(_two_point(), 1.0, 0.5, 3, 200, seed=0, perm=(0, 1, 2))

    def test_invalid_permutation_rejected(self):
        with pytest.raises(ValueError):
            exchangeability_test(_two_point(), 1.0, 0.5, 3, 200, seed=0, perm=(0, 0, 1))

    def test_constant_step_sequence_accepted(self):
        rep = exchangeability_test(_two_point(), 1.0, [0.5, 0.5, 0.5], 3, 300, seed=5)
        assert rep.p_value > 0.0

    def test_unequal_steps_rejected(self):
        # Exchangeability only holds for equal step sizes; mixed steps are a
        # caller error rather than a testable hypothesis.
        with pytest.raises(ValueError):
            exchangeability_test(_two_point(), 1.0, [0.5, 0.6, 0.5], 3, 300, seed=5)
