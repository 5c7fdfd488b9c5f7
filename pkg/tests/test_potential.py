from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgs import EdgePotential
from qgs.potential import as_fraction

small = st.fractions(min_value=-5, max_value=5, max_denominator=7)
polys = st.lists(small, min_size=1, max_size=5)
points = st.floats(min_value=0.0, max_value=2.0, allow_nan=False)


def test_exact_coefficients_from_strings_and_floats():
    V = EdgePotential(["1/3", 0.5, 2])
    assert V.coeffs == (Fraction(1, 3), Fraction(1, 2), Fraction(2))
    assert as_fraction(0.1) == Fraction(0.1)  # exact binary value, not 1/10


def test_trailing_zeros_are_trimmed():
    assert EdgePotential([1, 2, 0, 0]).degree == 1
    assert EdgePotential.zero().is_zero


def test_x_one_minus_x():
    V = EdgePotential([0, 1, -1], length=1.0)
    assert V.integrate_exact() == Fraction(1, 6)
    assert V(0.5) == pytest.approx(0.25)
    assert V.derivative().coeffs == (Fraction(1), Fraction(-2))
    assert V.minimum() == pytest.approx(0.0)
    assert V.sup_abs() == pytest.approx(0.25)


def test_evaluation_outside_edge_is_rejected():
    V = EdgePotential([1], length=1.0)
    with pytest.raises(ValueError):
        V(1.5)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), True])
def test_bad_coefficients(bad):
    with pytest.raises((ValueError, TypeError)):
        EdgePotential([bad])


@given(polys, small, small, small)
def test_integral_is_additive(c, a, b, d):
    a, b, d = sorted((a, b, d))
    V = EdgePotential(c)
    assert V.integrate_exact(a, b) + V.integrate_exact(b, d) == V.integrate_exact(a, d)


@given(polys)
def test_derivative_of_antiderivative(c):
    V = EdgePotential(c)
    assert V.antiderivative().derivative() == V


@given(polys, small, points)
def test_shift(c, a, x):
    V = EdgePotential(c)
    assert float(V.shifted(a).exact(Fraction(x))) == pytest.approx(float(V.exact(Fraction(x) + a)), abs=1e-9)


@given(polys, polys, points)
@settings(max_examples=50)
def test_product_and_sum(c1, c2, x):
    A, B = EdgePotential(c1), EdgePotential(c2)
    fx = Fraction(x)
    assert (A * B).exact(fx) == A.exact(fx) * B.exact(fx)
    assert (A + B).exact(fx) == A.exact(fx) + B.exact(fx)


@given(polys)
@settings(max_examples=50)
def test_float_eval_matches_exact(c):
    V = EdgePotential(c, length=2.0)
    xs = np.linspace(0, 2, 7)
    assert np.allclose(V(xs), [float(V.exact(Fraction(x))) for x in xs], rtol=1e-12, atol=1e-12)
