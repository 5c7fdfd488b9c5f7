from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from qgs import Delta, EdgePotential
from qgs.asymptotics import (beta, heat_coeffs, inverse_wronskian_series, resolvent_trace_coeffs,
                             smatrix_closed_forms, smatrix_series, vertex_integral_series, w_coeff)
from qgs.fundamental import _wkb_slope, solve_pair

from conftest import X1MX, compact_star, interval, lasso, open_star

coeff = st.fractions(min_value=-4, max_value=4, max_denominator=5)
polys = st.lists(coeff, min_size=1, max_size=4)


@given(polys, st.integers(min_value=1, max_value=9))
@settings(max_examples=40, deadline=None)
def test_parity_between_signs(c, l):
    V = EdgePotential(c)
    plus, minus = beta(V, l, 1), beta(V, l, -1)
    want = minus.poly.scaled((-1) ** l)
    assert plus.poly == want or (plus.is_zero and minus.is_zero)


@given(polys)
@settings(max_examples=30)
def test_first_coefficients(c):
    V = EdgePotential(c)
    assert w_coeff(V, 0) == EdgePotential([1])
    assert w_coeff(V, 1) == V.scaled(Fraction(1, 2))
    assert beta(V, 1, 1).poly == V.scaled(Fraction(-1, 2))
    assert beta(V, 0, 1).is_zero


def _series(terms, x, k):
    return sum(c.value(x) * k ** (-n) for n, c in terms.items())


@pytest.mark.parametrize("k, mode", [(30.0, "wkb"), (60.0, "wkb"), (25j, "decaying"), (30 + 30j, "decaying")])
def test_inverse_wronskian_series(k, mode):
    V = EdgePotential(X1MX, length=1.0)
    p = solve_pair(V, k, mode)
    x = 0.37
    numeric = p.u(1, x) * p.u(-1, x) / -p.wronskian
    assert abs(numeric - _series(inverse_wronskian_series(V, 8), x, k)) < 1e-12 * abs(numeric)


def test_vertex_integral_series_converges_at_sixth_order():
    V = EdgePotential([1, 2, -3], length=1.0)
    start, _ = vertex_integral_series(V)
    errs = []
    kappas = [20.0, 40.0, 80.0, 160.0]
    for kap in kappas:
        k = 1j * kap
        p = solve_pair(V, k, "decaying")
        # the series assumes u_- normalised along its WKB branch at x = 0
        w = p.log_derivative_start(1) - (-1j * k + _wkb_slope(V, k, -1, 10))
        numeric = p.moments[0] / -w
        series = sum(complex(c) * k ** (-n) for n, c in start.items())
        errs.append(abs(numeric - series))
    slope = -np.polyfit(np.log(kappas), np.log(errs), 1)[0]
    assert slope > 5.7


def test_free_kirchhoff_series_vanishes():
    series = smatrix_series(open_star(4), 4)
    assert all(m == sp.zeros(4, 4) for m in series[1:])
    P = sp.eye(4) - sp.ones(4, 4) / 4
    assert series[0] == sp.eye(4) - 2 * P


def test_closed_forms_agree_with_series():
    for qg in (lasso(X1MX, Delta(sp.Rational(3, 2))), compact_star([2, 3], centre=Delta(1))):
        series = smatrix_series(qg, 3)
        closed = smatrix_closed_forms(qg)
        for m in range(3):
            assert sp.expand(series[m + 1] - closed[m]) == sp.zeros(qg.graph.E, qg.graph.E)


def test_dirichlet_interval_coefficients():
    b = resolvent_trace_coeffs(interval("dirichlet")).b
    assert b[1] == sp.Rational(1, 2)
    assert b[0] == sp.I / 2
    assert b[2] == 0


def test_neumann_interval_with_potential():
    b = resolvent_trace_coeffs(interval("neumann", X1MX)).b
    assert sp.simplify(b[2] + sp.Rational(1, 6) / (4 * sp.I)) == 0
    assert b[1] == -sp.Rational(1, 2)


def test_heat_from_trace_coefficients():
    qg = compact_star(X1MX)
    b = resolvent_trace_coeffs(qg)
    a = heat_coeffs(b).a
    assert sp.simplify(a[0] - sp.Integer(3) / sp.sqrt(4 * sp.pi)) == 0
    assert a[1] == -b.b[1]
    assert sp.simplify(heat_coeffs(b).a3_alt - a[2] * sp.sqrt(sp.pi)) == 0


def test_open_star_regularisations():
    dn = resolvent_trace_coeffs(open_star(3), "N").b[1]
    dd = resolvent_trace_coeffs(open_star(3), "D").b[1]
    assert (dn, dd) == (1, -sp.Rational(1, 2))


def test_bad_arguments():
    with pytest.raises(ValueError):
        beta(EdgePotential([1]), 2, 0)
    with pytest.raises(ValueError):
        resolvent_trace_coeffs(interval(), "X")
    with pytest.raises(ValueError):
        smatrix_series(interval(), 7)
