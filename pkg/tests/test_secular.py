import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgs import Delta, parse_quantum_graph
from qgs.secular import (ExcludedRegionError, assemble, eigenfunctions, find_eigenvalues,
                         find_negative_eigenvalues, positive_roots_U, zero_mode_multiplicity)

from conftest import X1MX, compact_star, interval, lasso, open_star


def test_unit_star_with_dirichlet_leaves():
    qg = compact_star(lengths=(1, 1, 1))
    roots = positive_roots_U(qg, 3.2 * math.pi)
    want = []
    for n in range(4):
        want += [((n + 0.5) * math.pi, 1)]
        if n:
            want += [(n * math.pi, 2)]
    want = sorted(w for w in want if w[0] < 3.2 * math.pi)
    assert [m for _, m, _ in roots] == [m for _, m in want]
    assert np.allclose([k for k, _, _ in roots], [k for k, _ in want], atol=1e-10)


def test_neumann_zero_mode():
    assert zero_mode_multiplicity(interval("neumann")) == 1
    assert zero_mode_multiplicity(interval("dirichlet")) == 0
    spec = find_eigenvalues(interval("neumann"), 30.0)
    assert np.allclose(spec.values, [0.0, math.pi**2], atol=1e-10)


@given(st.floats(min_value=0.2, max_value=60.0))
@settings(max_examples=25, deadline=None)
def test_unitarity(k):
    U = assemble(lasso(X1MX, Delta(0.5)), k).U
    assert np.linalg.norm(U @ U.conj().T - np.eye(len(U)), 2) < 1e-10
    S = assemble(open_star(3, Delta(2.0)), k).S
    assert np.linalg.norm(S @ S.conj().T - np.eye(len(S)), 2) < 1e-12


@pytest.mark.parametrize("k", [3.3, 2 + 0.5j, 11.0 + 4j])
def test_factorisation_of_z(k):
    qg = lasso(X1MX, Delta(0.5))
    m = assemble(qg, k)
    c = qg.conditions
    E = len(m.Z)
    F = (c.P + c.L + c.P_perp @ m.D_tilde) @ (np.eye(E) - m.S @ m.T) @ m.R1_tilde
    assert np.linalg.norm(F - m.Z) <= 1e-12 * np.linalg.norm(m.Z)
    XY = (c.P + c.L) @ m.X + c.P_perp @ m.Y
    assert np.linalg.norm(XY - m.Z) <= 1e-12 * np.linalg.norm(m.Z)


@pytest.mark.parametrize("k", [0.5, 4.0, 2 + 1j])
def test_free_vertex_scattering_matrix(k):
    qg = open_star(3, Delta(1.5))
    c = qg.conditions
    A, B = c.P + c.L, c.P_perp
    want = -np.linalg.solve(A + 1j * k * B, A - 1j * k * B)
    assert np.allclose(assemble(qg, k).S, want, atol=1e-13)


@pytest.mark.parametrize("n, c", [(3, 3.0), (4, 2.0), (2, 0.5)])
def test_delta_star_bound_state(n, c):
    ev = find_negative_eigenvalues(open_star(n, Delta(c)))
    assert len(ev) == 1
    assert ev[0].lam == pytest.approx(-(c / n) ** 2, rel=1e-9)


def test_repulsive_delta_has_no_bound_state():
    assert find_negative_eigenvalues(open_star(3, Delta(-1.0))) == []


def test_eigenfunctions_satisfy_vertex_conditions():
    qg = lasso(X1MX, Delta(0.5))
    spec = find_eigenvalues(qg, 200.0)
    for e in spec.eigenvalues:
        if e.lam <= 0:
            continue
        for f in eigenfunctions(qg, e.k, e.multiplicity):
            assert f.bc_residual <= 1e-7
            assert f.norm2() == pytest.approx(1.0, rel=1e-10)


def test_eigenfunction_solves_the_equation():
    qg = compact_star(X1MX)
    e = find_eigenvalues(qg, 60.0).eigenvalues[0]
    f = eigenfunctions(qg, e.k)[0]
    x, h = 0.4, 1e-4
    second = (f("1", x + h) - 2 * f("1", x) + f("1", x - h)) / h**2
    assert abs(-second + x * (1 - x) * f("1", x) - e.lam * f("1", x)) < 1e-5


def test_weyl_count():
    qg = compact_star(X1MX)
    spec = find_eigenvalues(qg, 1e4)
    assert abs(spec.count() - qg.graph.total_length * 100 / math.pi) <= qg.graph.E + 2
    assert "warning" not in spec.meta


def test_excluded_disc():
    with pytest.raises(ExcludedRegionError):
        assemble(interval(), 1e-4)
    with pytest.raises(ValueError):
        assemble(interval(), 1 - 1j)


def test_ring_degeneracy():
    ring = parse_quantum_graph({"vertices": ["a", "b"],
                                "internal_edges": [{"id": "1", "from": "a", "to": "b", "length": 1},
                                                   {"id": "2", "from": "b", "to": "a", "length": 1}]})
    spec = find_eigenvalues(ring, 50.0)
    assert [(round(e.lam, 8), e.multiplicity) for e in spec.eigenvalues] == [
        (0.0, 1), (round(math.pi**2, 8), 2), (round(4 * math.pi**2, 8), 2)]


@pytest.mark.parametrize("depth", [200.0, 2000.0])
@pytest.mark.parametrize("kind", ["dirichlet", "neumann"])
def test_deep_well_bound_states(kind, depth):
    """Constant well: -V + (n pi)^2 with no spurious or missing roots."""
    got = [e.lam for e in find_negative_eigenvalues(interval(kind, [-depth]))]
    n = np.arange(0 if kind == "neumann" else 1, 40)
    want = [x for x in (n * math.pi) ** 2 - depth if x < 0]
    assert len(got) == len(want)
    assert np.allclose(got, want, rtol=1e-11)


def test_no_phantom_root_from_degenerate_decaying_pair():
    # the loop potential dips below zero; a node-carrying decaying solution once faked a root here
    ev = find_negative_eigenvalues(lasso(X1MX, Delta(1.5)))
    assert len(ev) == 1
    for e in ev:
        assert eigenfunctions(lasso(X1MX, Delta(1.5)), e.k)[0].bc_residual < 1e-10
