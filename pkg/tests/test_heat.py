import math
from functools import lru_cache

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from qgs import Delta
from qgs.asymptotics import HeatCoefficients, heat_coeffs, resolvent_trace_coeffs
from qgs.heat import (HEAT_TOL, eigen_sum_trace, fit_slope, heat_trace, lambda_for, laplace_trace, parse_grid,
                      residual_study, weyl_tail)
from qgs.resolvent import regularized_trace
from qgs.secular import find_eigenvalues

from conftest import X1MX, compact_star, interval, lasso

T_GRID = [2.0**-m for m in range(6, 10)]


def poisson_dirichlet(t):
    """Dirichlet unit interval via the Jacobi transform of the theta series."""
    m = np.arange(1, 40)
    return ((1 + 2 * np.sum(np.exp(-(m**2) / t))) / math.sqrt(math.pi * t) - 1) / 2


@pytest.mark.parametrize("t", [0.001, 0.01, 0.1, 1.0])
def test_theta_oracle(t):
    s = heat_trace(interval("dirichlet"), [t])[0]
    assert abs(s.value - poisson_dirichlet(t)) < 1e-10
    assert s.tail_bound <= HEAT_TOL


def test_lambda_for_meets_tolerance():
    qg = compact_star(X1MX)
    for t in (1e-3, 0.05):
        lam = lambda_for(qg, t)
        assert weyl_tail(qg, lam, t) <= HEAT_TOL
        assert weyl_tail(qg, lam / 1.25, t) > HEAT_TOL or lam == 8.0 / t


def test_insufficient_cutoff_is_refused():
    qg = interval("dirichlet")
    spec = find_eigenvalues(qg, 100.0)
    with pytest.raises(ValueError, match="too small"):
        heat_trace(qg, [0.01], spectrum=spec)


@lru_cache(maxsize=None)
def _lasso_spectrum():
    qg = lasso([0, 0, 1])  # V = x^2 >= 0 with Kirchhoff: no negative eigenvalues
    return qg, find_eigenvalues(qg, lambda_for(qg, 0.01))


@given(st.floats(min_value=0.01, max_value=2.0), st.floats(min_value=1.01, max_value=3.0))
@settings(max_examples=30, deadline=None)
def test_positive_and_decreasing_for_nonnegative_operator(t, factor):
    qg, spec = _lasso_spectrum()
    a, b = heat_trace(qg, [t, t * factor], spectrum=spec)
    assert a.value > 0 and b.value > 0
    assert b.value < a.value


@pytest.mark.parametrize("N", [1, 2])
def test_partial_sums_on_intervals(N):
    for kind in ("dirichlet", "neumann"):
        table = residual_study(interval(kind), T_GRID, N)
        assert table.passed, table.note


def test_neumann_potential_second_order():
    table = residual_study(interval("neumann", X1MX), T_GRID, 2)
    assert table.passed
    assert table.slope >= 1.5 - 1 - 0.15


def test_wrong_second_coefficient_is_caught():
    qg = interval("neumann", X1MX)
    good = heat_coeffs(resolvent_trace_coeffs(qg))
    bad = HeatCoefficients((good.a[0], good.a[1] + sp.Rational(1, 10)) + good.a[2:], good.a3_alt)
    table = residual_study(qg, T_GRID, 2, a=bad)
    assert not table.passed


def test_laplace_consistency():
    qg = compact_star(X1MX, centre=Delta(0.5))
    spec = find_eigenvalues(qg, 4e4)
    for kap in (3.0, 6.0):
        lap = laplace_trace(qg, kap, spectrum=spec)
        tr = regularized_trace(qg, 1j * kap).real
        assert abs(lap - tr) <= 1e-6 * abs(tr)


def test_eigen_sum_matches_closed_form():
    qg = interval("dirichlet")
    spec = find_eigenvalues(qg, 1e4)
    kap = 2.0
    closed = (kap / math.tanh(kap) - 1) / (2 * kap * kap)
    # truncation at 1e4 with a Weyl tail leaves a relative error of a few 1e-6
    assert abs(eigen_sum_trace(qg, kap, spec) - closed) < 1e-5 * closed


def test_parse_grid():
    assert np.allclose(parse_grid("1:8:4"), [1, 2, 4, 8])
    assert np.allclose(parse_grid("0:1:3", geometric=False), [0, 0.5, 1])
    assert np.allclose(parse_grid("2:5:1"), [2])
    for bad in ("1:2", "a:b:c", "0:1:3", "1:2:0", "1:inf:3"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_fit_slope():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert fit_slope(x, 3 * x**-2.5) == pytest.approx(-2.5)
