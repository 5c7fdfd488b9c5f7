import cmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from qgs import EdgePotential
from qgs.fundamental import endpoint_batch, solve_pair, wkb_reference, zero_energy_basis


def reference_endpoints(coeffs, k, length, sign):
    V = np.polynomial.Polynomial(coeffs)

    def rhs(x, y):
        return [y[1], (V(x) - k * k) * y[0]]

    sol = solve_ivp(rhs, (0, length), [1 + 0j, sign * 1j * k], method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[0, -1], sol.y[1, -1]


@pytest.mark.parametrize("sign", [1, -1])
def test_linear_potential_matches_dop853(sign):
    V = EdgePotential([0, 1], length=1.0)
    p = solve_pair(V, 5.0)
    u, du = reference_endpoints([0, 1], 5.0, 1.0, sign)
    assert abs(p.u(sign, 1.0) - u) < 1e-9
    assert abs(p.du(sign, 1.0) - du) < 1e-9


@pytest.mark.parametrize("k", [0.7, 3.0, 12.5, 2 + 1.5j])
def test_constant_potential_closed_form(k):
    c, l = 2.0, 1.3
    p = solve_pair(EdgePotential([c], length=l), k)
    q = cmath.sqrt(k * k - c)
    x = np.linspace(0, l, 9)
    for s in (1, -1):
        want = np.cos(q * x) + s * 1j * k * np.sin(q * x) / q
        assert np.allclose(p.u(s, x), want, rtol=1e-11, atol=1e-11)


@given(st.floats(min_value=0.5, max_value=40), st.floats(min_value=0, max_value=5))
@settings(max_examples=30, deadline=None)
def test_wronskian_constant(kr, ki):
    k = complex(kr, ki)
    p = solve_pair(EdgePotential([0, 1, -1], length=1.0), k)
    assert abs(p.wronskian - 2j * k) < 1e-10 * abs(k)
    for x in (0.3, 0.77, 1.0):
        assert abs(p.wronskian_at(x) * np.exp(0) - 2j * k) < 1e-9 * abs(k)


def test_no_overflow_far_up_the_imaginary_axis():
    V = EdgePotential([0, 1, -1], length=1.0)
    p = solve_pair(V, 1000j, "decaying")
    vals = np.array(p.end_values[1] + p.end_values[-1])
    assert np.all(np.isfinite(vals))
    # the decaying solution reaches e^{-1000} at the far end; its scaled form stays of order one
    assert abs(p.v(1, 1.0)) < 10
    assert abs(p.wronskian - 2000j * 1j) < 1e-8 * 2000
    with pytest.raises(OverflowError):
        p.u(-1, 1.0)


def test_plane_wave_refuses_to_overflow_silently():
    with pytest.raises(OverflowError, match="decaying"):
        solve_pair(EdgePotential([0, 1, -1], length=1.0), 1000j, "plane_wave")


def test_analytic_in_k():
    """Cauchy-Riemann: d/dk along the real and imaginary directions agree."""
    V = EdgePotential([1, 2, -3], length=1.0)
    k, h = 4.0 + 0.5j, 1e-5

    def f(z):
        return solve_pair(V, z).u(1, 0.8)

    dre = (f(k + h) - f(k - h)) / (2 * h)
    dim = (f(k + 1j * h) - f(k - 1j * h)) / (2j * h)
    assert abs(dre - dim) < 1e-6 * abs(dre)


def test_batch_agrees_with_single():
    V = EdgePotential([0, 1, -1], length=1.0)
    ks = np.array([2.0, 7.5, 3 + 1j])
    v, dv = endpoint_batch(V, ks, -1)
    for i, k in enumerate(ks):
        p = solve_pair(V, k)
        assert abs(v[i] - p.v(-1, 1.0)) < 1e-11
        assert abs(dv[i] - p.dv(-1, 1.0)) < 1e-10


def test_zero_energy_basis_for_constant_potential():
    (c, dc), (s, ds) = zero_energy_basis(EdgePotential([4], length=0.5))
    assert c == pytest.approx(np.cosh(1.0), rel=1e-12)
    assert dc == pytest.approx(2 * np.sinh(1.0), rel=1e-12)
    assert s == pytest.approx(np.sinh(1.0) / 2, rel=1e-12)
    assert ds == pytest.approx(np.cosh(1.0), rel=1e-12)


def test_wkb_mode_tracks_the_asymptotic_solution():
    V = EdgePotential([0, 1, -1], length=1.0)
    k = 200.0
    p = solve_pair(V, k, "wkb")
    x = np.linspace(0, 1, 11)
    ref = wkb_reference(V, k, 6)(x)
    assert np.max(np.abs(p.u(1, x) - ref)) < 1e-10


def test_bad_arguments():
    V = EdgePotential([1], length=1.0)
    with pytest.raises(ValueError):
        solve_pair(V, 0)
    with pytest.raises(ValueError):
        solve_pair(V, 1.0, "nonsense")
    with pytest.raises(ValueError):
        solve_pair(EdgePotential([1]), 1.0)
