import math

import numpy as np
import pytest

from qgs import Delta
from qgs.oracle import OracleError, fd_eigenvalues, richardson_eigenvalues
from qgs.secular import find_eigenvalues

from conftest import X1MX, compact_star, interval, lasso, open_star


def test_dirichlet_interval():
    got = richardson_eigenvalues(interval("dirichlet"), 5)
    want = (np.arange(1, 6) * math.pi) ** 2
    assert np.allclose(got, want, rtol=1e-8)


def test_neumann_interval_keeps_zero_mode():
    got = richardson_eigenvalues(interval("neumann"), 3)
    assert np.allclose(got, [0.0, math.pi**2, 4 * math.pi**2], rtol=1e-8, atol=1e-9)


def test_unit_star_closed_forms():
    got = richardson_eigenvalues(compact_star(lengths=(1, 1, 1)), 4)
    ks = [0.5 * math.pi, math.pi, math.pi, 1.5 * math.pi]
    assert np.allclose(got, np.square(ks), rtol=1e-8)


def test_richardson_improves_on_single_mesh():
    qg = interval("dirichlet")
    exact = math.pi**2
    coarse = abs(fd_eigenvalues(qg, 1, 1 / 64)[0] - exact)
    fine = abs(richardson_eigenvalues(qg, 1, 1 / 64)[0] - exact)
    assert fine < coarse * 1e-3


@pytest.mark.parametrize("qg", [lasso(X1MX, Delta(1.5)), compact_star([2, 3], centre=Delta(-1.0))],
                         ids=["lasso-delta", "star-repulsive"])
def test_agrees_with_secular_solver(qg):
    spec = find_eigenvalues(qg, 400.0).values
    fd = richardson_eigenvalues(qg, 6)
    assert np.allclose(fd, spec[:6], rtol=1e-8, atol=1e-8)


def test_refuses_non_compact_graphs():
    with pytest.raises(OracleError):
        fd_eigenvalues(open_star(3), 2, 0.01)
