import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from parakernel import quadrature


def test_polynomial_is_exact():
    vals, err = quadrature.integrate(lambda x: 3 * x**2, [0.0], [2.0])
    assert math.isclose(vals[0], 8.0, rel_tol=1e-13)


def test_vectorized_intervals():
    a = np.array([0.0, 1.0, 2.0])
    b = a + 1.0
    vals, _ = quadrature.integrate(np.exp, a, b)
    np.testing.assert_allclose(vals, np.exp(b) - np.exp(a), rtol=1e-12)


def test_cumulative_matches_closed_form():
    x = np.geomspace(1.0, 1e4, 30)
    F = quadrature.cumulative(lambda s: 1.0 / s, x)
    np.testing.assert_allclose(F, np.log(x), rtol=1e-10, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e5), st.floats(1e-3, 1e5))
def test_antiderivative_is_additive(r1, r2):
    F = quadrature.Antiderivative(lambda s: 1.0 / (1.0 + s) ** 2, lo=0.0)
    lo, hi = sorted((r1, r2))
    val = float(F(np.array([hi]))[0] - F(np.array([lo]))[0])
    exact = 1.0 / (1.0 + lo) - 1.0 / (1.0 + hi)
    assert math.isclose(val, exact, rel_tol=1e-7, abs_tol=1e-12)
