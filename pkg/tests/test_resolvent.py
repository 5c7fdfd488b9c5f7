import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgs import Delta, GraphPoint
from qgs.resolvent import (NearSpectrumError, apply_resolvent, free_kernel, regularized_trace, resolvent_kernel,
                           star_kernel)

from conftest import X1MX, compact_star, interval, lasso, open_star


@pytest.mark.parametrize("x, y", [(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)])
def test_dirichlet_green_function(x, y):
    kap = 3.0
    lo, hi = min(x, y), max(x, y)
    want = math.sinh(kap * lo) * math.sinh(kap * (1 - hi)) / (kap * math.sinh(kap))
    got = resolvent_kernel(interval("dirichlet"), 1j * kap, GraphPoint("e", x), GraphPoint("e", y))
    assert abs(got - want) < 1e-14


@pytest.mark.parametrize("kap", [0.5, 2.0, 5.0, 40.0])
def test_interval_traces(kap):
    d = regularized_trace(interval("dirichlet"), 1j * kap)
    n = regularized_trace(interval("neumann"), 1j * kap)
    coth = 1 / math.tanh(kap)
    assert abs(d - (kap * coth - 1) / (2 * kap**2)) < 1e-12 / kap
    assert abs(n - (kap * coth + 1) / (2 * kap**2)) < 1e-12 / kap


@pytest.mark.parametrize("qg", [lasso(X1MX, Delta(1.5)), compact_star([1, 2]), open_star(3, Delta(1.0))],
                         ids=["lasso", "star", "open-star"])
@pytest.mark.parametrize("kind", ["D", "N"])
def test_moments_match_quadrature(qg, kind):
    k = 1j * 6.0
    a = regularized_trace(qg, k, kind, "moments")
    b = regularized_trace(qg, k, kind, "quadrature")
    assert abs(a - b) < 1e-12 * max(abs(a), 1e-3)


points = st.tuples(st.sampled_from(["loop/1", "loop/2", "stick"]), st.floats(min_value=0, max_value=1))


@given(points, points, st.floats(min_value=0.5, max_value=20))
@settings(max_examples=40, deadline=None)
def test_kernel_symmetry(p, q, kap):
    qg = lasso(X1MX, Delta(1.5))
    x, y = GraphPoint(*p), GraphPoint(*q)
    a = resolvent_kernel(qg, 1j * kap, x, y)
    b = resolvent_kernel(qg, 1j * kap, y, x)
    assert abs(a - b) <= 1e-12 * max(abs(a), 1e-12)


def test_free_part_on_external_edges():
    qg = open_star(3)
    k = 2.0 + 1.0j
    got = free_kernel(qg, k, GraphPoint("1", 0.3), GraphPoint("1", 1.1))
    assert abs(got - 1j / (2 * k) * np.exp(1j * k * 0.8)) < 1e-15


def test_star_kernel():
    k = 3j
    assert star_kernel("D", k, 0.0, 0.7) == 0
    assert star_kernel("N", k, 0.4, 0.7) == pytest.approx(1j / (2 * k) * (np.exp(-0.9) + np.exp(-3.3)))
    assert star_kernel("N", k, 0.1, 0.2, external=False) == 0
    with pytest.raises(ValueError):
        star_kernel("N", 3.0, 0.1, 0.2)


def test_kirchhoff_star_equals_whole_line():
    """Two half-lines joined by Kirchhoff: the free line kernel."""
    qg = open_star(2)
    k = 1.5j
    got = resolvent_kernel(qg, k, GraphPoint("1", 0.4), GraphPoint("2", 0.9))
    assert abs(got - 1j / (2 * k) * np.exp(1j * k * 1.3)) < 1e-14


def test_near_spectrum_is_detected():
    with pytest.raises(NearSpectrumError):
        resolvent_kernel(interval("dirichlet"), math.pi, GraphPoint("e", 0.3), GraphPoint("e", 0.6))


def test_trace_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        regularized_trace(interval(), 3.0)
    with pytest.raises(ValueError):
        regularized_trace(interval(), 3j, "X")


def test_apply_resolvent_solves_the_equation():
    k = 2j
    phi = apply_resolvent(interval("dirichlet"), k, {"e": lambda y: np.ones_like(y)})
    x = np.linspace(0, 1, 7)
    want = 0.25 * (1 - np.cosh(2 * (x - 0.5)) / math.cosh(1.0))
    assert np.allclose(phi("e", x), want, atol=1e-12)


def test_apply_resolvent_respects_vertex_conditions():
    qg = compact_star(X1MX, centre=Delta(0.7))
    phi = apply_resolvent(qg, 3j, {"1": lambda y: y, "3": np.cos})
    vals, ders = phi.boundary_data()
    c = qg.conditions
    assert np.linalg.norm((c.P + c.L) @ vals + c.P_perp @ ders) < 1e-8
