import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from specsl import gaussian_tv, grs_step


class TestAcceptanceRule:
    def test_accept_keeps_proposal_sample(self):
        out = grs_step(
            u=0.0,
            xi=np.array([0.5, -0.5]),
            proposal_mean=np.array([1.0, 2.0]),
            target_mean=np.array([1.1, 2.0]),
            sigma=1.0,
        )
        assert out.accepted
        np.testing.assert_allclose(out.sample, [1.5, 1.5])

    def test_identical_means_always_accept(self):
        out = grs_step(
            u=1.0 - 1e-12,
            xi=np.array([3.0]),
            proposal_mean=np.array([2.0]),
            target_mean=np.array([2.0]),
            sigma=0.5,
        )
        assert out.accepted
        np.testing.assert_allclose(out.sample, 2.0 + 0.5 * 3.0)

    def test_threshold_boundary(self):
        # v = mean difference; with xi aligned against v the ratio exceeds 1
        # and any u accepts.
        xi = np.array([1.0])
        proposal = np.array([0.0])
        target = np.array([2.0])  # v = -2, <v,xi>/sigma = -2, ratio > 1
        out = grs_step(0.999999, xi, proposal, target, 1.0)
        assert out.accepted

    def test_rejection_reflects_noise(self):
        # Frozen worked example of the reflection formula.
        out = grs_step(
            u=1.0 - 1e-15,
            xi=np.array([1.0, 1.0]),
            proposal_mean=np.array([2.0, 0.0]),
            target_mean=np.array([0.0, 0.0]),
            sigma=1.0,
        )
        assert not out.accepted
        np.testing.assert_allclose(out.sample, [-1.0, 1.0], atol=1e-12)

    def test_input_validation(self):
        xi = np.zeros(1)
        m = np.zeros(1)
        with pytest.raises(ValueError):
            grs_step(0.5, xi, m, m, 0.0)
        with pytest.raises(ValueError):
            grs_step(1.0, xi, m, m, 1.0)
        with pytest.raises(ValueError):
            grs_step(-0.1, xi, m, m, 1.0)

    def test_deterministic(self):
        args = (
            0.7,
            np.array([0.3, -1.2]),
            np.array([1.0, 1.0]),
            np.array([0.5, 1.5]),
            0.8,
        )
        a = grs_step(*args)
        b = grs_step(*args)
        assert a.accepted == b.accepted
        assert (a.sample == b.sample).all()

    @settings(max_examples=60, deadline=None)
    @given(
        u=st.floats(0.0, 0.999999),
        xi0=st.floats(-3, 3),
        xi1=st.floats(-3, 3),
        v0=st.floats(-2, 2),
        v1=st.floats(-2, 2),
        sigma=st.floats(0.1, 3.0),
    )
    def test_rejected_sample_preserves_noise_norm(self, u, xi0, xi1, v0, v1, sigma):
        # Reflection is an isometry: ||sample - target_mean|| == sigma*||xi||.
        xi = np.array([xi0, xi1])
        target = np.array([0.3, -0.2])
        proposal = target + np.array([v0, v1])
        out = grs_step(u, xi, proposal, target, sigma)
        if not out.accepted:
            got = np.linalg.norm(out.sample - target)
            want = sigma * np.linalg.norm(xi)
            assert abs(got - want) < 1e-12 * max(1.0, want)


class TestGaussianTv:
    def test_frozen_value_at_two_sigma(self):
        # ||v|| = 2 sigma: total variation = 2 Phi(1) - 1.
        got = gaussian_tv(np.array([2.0]), np.array([0.0]), 1.0)
        assert abs(got - 0.6826894921370859) < 1e-15

    def test_zero_distance(self):
        assert gaussian_tv(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.7) == 0.0

    @pytest.mark.parametrize("delta", [0.5, 1.0, 2.0, 3.0])
    def test_matches_overlap_integral(self, delta):
        # TV between N(0, s^2) and N(delta, s^2) along the mean-difference
        # axis, computed by direct quadrature of |phi_1 - phi_2| / 2.
        sigma = 1.3
        f = lambda x: abs(norm.pdf(x, 0, sigma) - norm.pdf(x, delta, sigma)) / 2.0
        want, _ = quad(f, -12 * sigma, 12 * sigma, limit=200)
        got = gaussian_tv(np.array([delta, 0.0]), np.zeros(2), sigma)
        assert abs(got - want) < 1e-6

    def test_dimension_only_enters_through_norm(self):
        a = gaussian_tv(np.array([3.0, 4.0]), np.zeros(2), 2.0)
        b = gaussian_tv(np.array([5.0]), np.zeros(1), 2.0)
        assert abs(a - b) < 1e-15


class TestRejectionRate:
    def test_empirical_rate_matches_tv(self):
        # ||v|| = 2 sigma in d = 3; binomial 4-SE band around 0.6827.
        rng = np.random.default_rng(31)
        n = 20_000
        sigma = 1.0
        target = np.zeros(3)
        proposal = np.array([2.0, 0.0, 0.0])
        rejected = 0
        for u, xi in zip(rng.random(n), rng.standard_normal((n, 3))):
            if not grs_step(float(u), xi, proposal, target, sigma).accepted:
                rejected += 1
        expected = gaussian_tv(proposal, target, sigma)
        se = math.sqrt(expected * (1 - expected) / n)
        assert abs(rejected / n - expected) < 4 * se

    def test_output_law_is_target_gaussian(self):
        # Regardless of accept/reject, output ~ N(target_mean, sigma^2 I).
        rng = np.random.default_rng(32)
        n = 20_000
        target = np.array([1.0])
        proposal = np.array([2.5])
        samples = np.empty(n)
        for i, (u, xi) in enumerate(zip(rng.random(n), rng.standard_normal((n, 1)))):
            samples[i] = grs_step(float(u), xi, proposal, target, 1.0).sample[0]
        from scipy.stats import kstest

        p = kstest(samples, "norm", args=(1.0, 1.0)).pvalue
        assert p > 0.001
