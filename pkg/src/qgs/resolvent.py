"""Resolvent kernel of ``H`` and the regularised resolvent trace.

With ``W~_e = u_+ u_-' - u_+' u_-`` (``-2ik`` for plane waves) the kernel is

    r(x, y) = delta_{ee'} u_+(x_>) u_-(x_<) / W~_e
              + Phi~(x) (1 - S T)^{-1} S Psi~(y),

where ``Phi~(x) = Phi(x) conj(R_1(conj k))^{-1}`` and
``Psi~(y) = R_1 W~^{-1} Phi(y)^T``. All factors are evaluated from the
scaled fundamental solutions, so nothing overflows for large ``Im k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .fundamental import FundamentalPair
from .graph import ExternalEdge, GraphPoint
from .problem import QuantumGraph
from .secular import assemble

__all__ = [
    "NearSpectrumError",
    "KernelEvaluation",
    "free_kernel",
    "resolvent_kernel",
    "star_kernel",
    "apply_resolvent",
    "regularized_trace",
]

GL_ORDER = 20
_GL = np.polynomial.legendre.leggauss(GL_ORDER)
COND_LIMIT = 1e12


class NearSpectrumError(ArithmeticError):
    """``1 - S T`` is numerically singular: ``k^2`` is (close to) an eigenvalue."""


def _panels(a: float, b: float, width: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    if b <= a:
        return np.zeros(0), np.zeros(0)
    n = max(1, math.ceil((b - a) / width))
    edges = np.linspace(a, b, n + 1)
    t, w = _GL
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    return x.ravel(), (0.5 * (hi - lo) * w).ravel()


class KernelEvaluation:
    """Everything needed to evaluate the resolvent kernel at one ``k``."""

    def __init__(self, qg: QuantumGraph, k: complex, mode: str | None = None):
        qg = qg.normalized()
        self.qg = qg
        self.k = k = complex(k)
        if k.imag <= 0 and not qg.graph.is_compact:
            raise ValueError("Im k > 0 is required on graphs with external edges")
        self.sec = assemble(qg, k, mode)
        self.pairs: dict[str, FundamentalPair] = self.sec.pairs
        self.idx = qg.graph.index
        self.E = qg.graph.E

    @cached_property
    def middle(self) -> np.ndarray:
        """``(1 - S T)^{-1} S``."""
        S, T = self.sec.S, self.sec.T
        A = np.eye(self.E) - S @ T
        c = np.linalg.cond(A)
        if not np.isfinite(c) or c > COND_LIMIT:
            raise NearSpectrumError(
                f"1 - S T has condition number {c:.3g} at k = {self.k}; k^2 is within "
                f"~{abs(self.k) ** 2 / max(c, 1.0):.2g} of an eigenvalue")
        return np.linalg.solve(A, S)

    @cached_property
    def w_ext(self) -> complex:
        return -2j * self.k

    def w_edge(self, eid: str) -> complex:
        return -self.pairs[eid].wronskian

    # -- row / column factors -------------------------------------------------

    def phi(self, edge: str, x: np.ndarray) -> np.ndarray:
        """``Phi~(x)``: shape ``(len(x), E)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), self.E), dtype=complex)
        k = self.k
        e = self.qg.graph.edge(edge)
        if isinstance(e, ExternalEdge):
            out[:, self.idx.slot(e.id, "ext")] = np.exp(1j * k * x)
            return out
        p = self.pairs[e.id]
        l = e.length
        out[:, self.idx.slot(e.id, "0")] = np.exp(1j * k * x) * p.v(1, x)
        out[:, self.idx.slot(e.id, "l")] = np.exp(1j * k * (l - x)) * p.v(-1, x) / p.end_values[-1][2]
        return out

    def psi(self, edge: str, y: np.ndarray) -> np.ndarray:
        """``Psi~(y)``: shape ``(E, len(y))``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros((self.E, len(y)), dtype=complex)
        k = self.k
        e = self.qg.graph.edge(edge)
        if isinstance(e, ExternalEdge):
            out[self.idx.slot(e.id, "ext")] = np.exp(1j * k * y) / self.w_ext
            return out
        p = self.pairs[e.id]
        W = self.w_edge(e.id)
        l = e.length
        out[self.idx.slot(e.id, "0")] = np.exp(1j * k * y) * p.v(1, y) / W
        out[self.idx.slot(e.id, "l")] = np.exp(1j * k * (l - y)) * p.end_values[1][2] * p.v(-1, y) / W
        return out

    def free(self, edge_x: str, x, edge_y: str, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if str(edge_x) != str(edge_y):
            return np.zeros(x.shape, dtype=complex)
        e = self.qg.graph.edge(edge_x)
        k = self.k
        if isinstance(e, ExternalEdge):
            return np.exp(1j * k * np.abs(x - y)) / self.w_ext
        p = self.pairs[e.id]
        hi, lo = np.maximum(x, y), np.minimum(x, y)
        return np.exp(1j * k * (hi - lo)) * p.v(1, hi) * p.v(-1, lo) / self.w_edge(e.id)

    def kernel(self, edge_x: str, x, edge_y: str, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float)))
        rows = self.phi(edge_x, x.ravel()) @ self.middle
        cols = self.psi(edge_y, y.ravel())
        extra = np.einsum("ia,ai->i", rows, cols)
        return (self.free(edge_x, x.ravel(), edge_y, y.ravel()) + extra).reshape(x.shape)

    def diagonal(self, edge: str, x) -> np.ndarray:
        return self.kernel(edge, x, edge, x)

    # -- trace ----------------------------------------------------------------

    def trace_moments(self) -> complex:
        """``int (r_H - r_0)(x, x) dx`` plus the free interior part, via edge moments."""
        J = np.zeros((self.E, self.E), dtype=complex)
        free = 0j
        k = self.k
        for e in self.qg.graph.external_edges:
            i = self.idx.slot(e.id, "ext")
            J[i, i] = (1j / (2 * k)) / self.w_ext  # int_0^inf e^{2ikx} dx / W
        for e in self.qg.graph.internal_edges:
            p = self.pairs[e.id]
            W = self.w_edge(e.id)
            mpp, mpm, mmm = p.moments
            vp_l, vm_l = p.end_values[1][2], p.end_values[-1][2]
            ph = np.exp(1j * k * e.length)
            i0, il = self.idx.slot(e.id, "0"), self.idx.slot(e.id, "l")
            J[i0, i0] = mpp / W
            J[i0, il] = ph * mpm / (W * vm_l)
            J[il, i0] = ph * vp_l * mpm / W
            J[il, il] = vp_l * mmm / (W * vm_l)
            free += mpm / W
        return free + np.trace(self.middle @ J)

    def trace_quadrature(self, rtol: float = 1e-10, max_level: int = 12) -> complex:
        """Same quantity by adaptive panel quadrature of the kernel diagonal."""
        k = self.k
        total = 0j
        for e in self.qg.graph.internal_edges:
            total += _adaptive(lambda x, eid=e.id: self.diagonal(eid, x), 0.0, e.length, rtol, max_level,
                               start=max(1, math.ceil(e.length * abs(k) / 2)))
        for e in self.qg.graph.external_edges:
            # r_H - r_0 on an external edge is c e^{2ikx}: integrate up to the cut-off, add the tail
            decay = 2 * k.imag
            cut = -math.log(1e-14) / decay
            f = lambda x, eid=e.id: self.diagonal(eid, x) - self.free(eid, x, eid, x)  # noqa: E731
            part = _adaptive(f, 0.0, cut, rtol, max_level, start=max(1, math.ceil(cut * abs(k) / 2)))
            c = f(np.array([0.0]))[0]
            tail = c * np.exp(2j * k * cut) * (1j / (2 * k))
            total += part + tail
        return total


def _adaptive(f: Callable, a: float, b: float, rtol: float, max_level: int, start: int = 1) -> complex:
    n = start
    prev = None
    for _ in range(max_level):
        x, w = _panels(a, b, (b - a) / n)
        val = complex(np.sum(w * f(x)))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return val
        prev = val
        n *= 2
    raise ArithmeticError(f"panel quadrature did not converge on [{a}, {b}]")


def free_kernel(qg: QuantumGraph, k: complex, x: GraphPoint, y: GraphPoint) -> complex:
    """``u_+(x_>) u_-(x_<) / W~`` on internal edges, ``(i/2k) e^{ik|x-y|}`` outside."""
    ev = KernelEvaluation(qg, k)
    return complex(ev.free(x.edge, x.x, y.edge, y.x))


def resolvent_kernel(qg: QuantumGraph, k: complex, x: GraphPoint, y: GraphPoint) -> complex:
    ev = KernelEvaluation(qg, k)
    return complex(ev.kernel(x.edge, x.x, y.edge, y.x)[0])


def star_kernel(kind: str, k: complex, x: float, y: float, external: bool = True) -> complex:
    """Half-line resolvent kernel with a Dirichlet (``"D"``) or Neumann (``"N"``) end.

    ``(i/2k)(e^{ik|x-y|} -+ e^{ik(x+y)})``: the minus sign belongs to
    Dirichlet, so the kernel vanishes at the vertex.
    """
    if not external:
        return 0j
    kind = kind.upper()
    if kind not in ("D", "N"):
        raise ValueError("kind must be 'D' or 'N'")
    k = complex(k)
    if k.imag <= 0:
        raise ValueError("Im k > 0 required")
    s = -1.0 if kind == "D" else 1.0
    return complex((1j / (2 * k)) * (np.exp(1j * k * abs(x - y)) + s * np.exp(1j * k * (x + y))))


def regularized_trace(qg: QuantumGraph, k: complex, kind: str = "N", method: str = "moments") -> complex:
    """``tr(R_H(k^2) - J R_{D/N}(k^2) J*)`` at ``k`` in the upper half plane (typically ``i kappa``)."""
    kind = kind.upper()
    if kind not in ("D", "N"):
        raise ValueError("kind must be 'D' or 'N'")
    k = complex(k)
    if k.imag <= 0:
        raise ValueError("the trace is evaluated for Im k > 0")
    ev = KernelEvaluation(qg, k)
    s = -1.0 if kind == "D" else 1.0
    ext = ev.qg.graph.E_ex * s / (4 * k * k)  # int (r_0 - r_{D/N})(x, x) dx per external edge
    if method == "moments":
        return complex(ev.trace_moments() + ext)
    if method == "quadrature":
        return complex(ev.trace_quadrature() + ext)
    raise ValueError("method must be 'moments' or 'quadrature'")


@dataclass
class ResolventResult:
    """``phi = R_H(k^2) psi`` as an edgewise function."""

    ev: KernelEvaluation
    psi: Mapping[str, Callable]
    coeffs: np.ndarray
    width: float
    ext_cutoff: float

    def __call__(self, edge: str, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ev = self.ev
        out = ev.phi(edge, x) @ (ev.middle @ self.coeffs)
        f = self.psi.get(str(edge))
        if f is None:
            return out
        e = ev.qg.graph.edge(edge)
        upper = self.ext_cutoff if isinstance(e, ExternalEdge) else e.length
        free = np.empty(len(x), dtype=complex)
        for i, xi in enumerate(x):
            ya, wa = _panels(0.0, xi, self.width)
            yb, wb = _panels(xi, upper, self.width)
            y = np.concatenate([ya, yb])
            w = np.concatenate([wa, wb])
            free[i] = np.sum(w * ev.free(edge, xi, edge, y) * f(y))
        return out + free

    def boundary_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Values and inward derivatives at every slot (derivatives by 8th order differences)."""
        g = self.ev.qg.graph
        vals = np.zeros(g.E, dtype=complex)
        ders = np.zeros(g.E, dtype=complex)
        h = 1e-3
        fw = np.array([-761 / 280, 8, -14, 56 / 3, -35 / 2, 56 / 5, -14 / 3, 8 / 7, -1 / 8])
        for i, s in enumerate(g.index.slots):
            e = g.edge(s.edge)
            if s.end == "l":
                xs = e.length - h * np.arange(9)
            else:
                xs = h * np.arange(9)
            f = self(s.edge, xs)
            vals[i] = f[0]
            ders[i] = np.dot(fw, f) / h
        return vals, ders


def apply_resolvent(qg: QuantumGraph, k: complex, psi: Mapping[str, Callable], *, ext_cutoff: float = 20.0,
                    panel_width: float | None = None) -> ResolventResult:
    """``R_H(k^2) psi`` for edgewise ``psi`` (vectorised callables; missing edges mean 0).

    On external edges ``psi`` is integrated up to ``ext_cutoff``.
    """
    ev = KernelEvaluation(qg, k)
    width = panel_width or min(0.1, 1.0 / max(abs(ev.k), 1.0))
    c = np.zeros(ev.E, dtype=complex)
    psi = {str(key): f for key, f in psi.items()}
    for eid, f in psi.items():
        e = ev.qg.graph.edge(eid)
        upper = ext_cutoff if isinstance(e, ExternalEdge) else e.length
        y, w = _panels(0.0, upper, width)
        c += ev.psi(eid, y) @ (w * f(y))
    return ResolventResult(ev, psi, c, width, ext_cutoff)
