import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specsl import QuadratureError, adaptive_simpson, bisect_increasing


class TestAdaptiveSimpson:
    def test_exact_for_cubics(self):
        # Simpson's rule integrates cubics exactly; only rounding remains.
        got = adaptive_simpson(lambda x: x**3 - 2 * x**2 + x - 5, 0.0, 2.0)
        want = 2.0**4 / 4 - 2 * 2.0**3 / 3 + 2.0**2 / 2 - 5 * 2.0
        assert abs(got - want) < 1e-13

    def test_sine(self):
        assert abs(adaptive_simpson(math.sin, 0.0, math.pi) - 2.0) < 1e-12

    def test_exponential(self):
        assert abs(adaptive_simpson(math.exp, 0.0, 1.0) - (math.e - 1.0)) < 1e-12

    def test_reversed_bounds_negate(self):
        forward = adaptive_simpson(math.exp, 0.0, 1.0)
        backward = adaptive_simpson(math.exp, 1.0, 0.0)
        assert backward == -forward

    def test_empty_interval(self):
        assert adaptive_simpson(math.exp, 1.5, 1.5) == 0.0

    def test_depth_exhaustion_raises(self):
        spike = lambda x: 1.0 / math.sqrt(abs(x) + 1e-300)
        with pytest.raises(QuadratureError):
            adaptive_simpson(spike, 0.0, 1.0, tol=1e-14, max_depth=6)

    @settings(max_examples=50, deadline=None)
    @given(
        coeffs=st.tuples(*[st.floats(-5, 5) for _ in range(4)]),
        bounds=st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
    )
    def test_random_cubics_match_antiderivative(self, coeffs, bounds):
        a3, a2, a1, a0 = coeffs
        lo, hi = bounds
        f = lambda x: a3 * x**3 + a2 * x**2 + a1 * x + a0
        F = lambda x: a3 * x**4 / 4 + a2 * x**3 / 3 + a1 * x**2 / 2 + a0 * x
        got = adaptive_simpson(f, lo, hi)
        assert abs(got - (F(hi) - F(lo))) < 1e-9


class TestBisectIncreasing:
    def test_cube_root(self):
        root = bisect_increasing(lambda x: x**3, 8.0, 0.0, 3.0, tol=1e-12)
        assert abs(root - 2.0) < 1e-11

    def test_linear(self):
        root = bisect_increasing(lambda x: 2 * x + 1, 0.0, -5.0, 5.0)
        assert abs(root + 0.5) < 1e-9

    def test_target_outside_bracket_raises(self):
        with pytest.raises(ValueError):
            bisect_increasing(lambda x: x, 10.0, 0.0, 1.0)

    def test_endpoint_targets(self):
        assert bisect_increasing(lambda x: x, 0.0, 0.0, 1.0) == pytest.approx(0.0, abs=1e-9)
        assert bisect_increasing(lambda x: x, 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(0.01, 0.99))
    def test_roundtrip_on_monotone_map(self, x):
        f = lambda t: t + math.sin(t) * 0.5
        root = bisect_increasing(f, f(x), 0.0, 1.0, tol=1e-12)
        assert abs(root - x) < 1e-10


def test_quadrature_error_is_runtime_error():
    assert issubclass(QuadratureError, RuntimeError)


def test_simpson_handles_vector_free_functions():
    # Plain scalar callables only; result is a Python float.
    out = adaptive_simpson(lambda x: np.float64(x) ** 2, 0.0, 1.0)
    assert isinstance(out, float)
    assert abs(out - 1.0 / 3.0) < 1e-12
