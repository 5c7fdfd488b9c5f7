"""Exact large-``k`` expansions: WKB coefficients, vertex scattering series,
resolvent-trace coefficients ``b_n`` and heat coefficients ``a_n``.

Every WKB coefficient is purely real or purely imaginary, so polynomials are
kept as a real rational polynomial plus an ``i`` tag.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np
import sympy as sp

from .potential import EdgePotential, as_fraction
from .problem import QuantumGraph

__all__ = [
    "IPoly",
    "beta",
    "w_coeff",
    "inverse_wronskian_series",
    "vertex_integral_series",
    "boundary_beta",
    "omega_table",
    "smatrix_series",
    "smatrix_closed_forms",
    "resolvent_trace_coeffs",
    "heat_coeffs",
    "TraceCoefficients",
    "HeatCoefficients",
]


def _rat(f: Fraction) -> sp.Rational:
    return sp.Rational(f.numerator, f.denominator)


@dataclass(frozen=True)
class IPoly:
    """``poly(x)`` times ``i`` if ``imaginary`` else times 1; ``poly`` has rational coefficients."""

    poly: EdgePotential
    imaginary: bool = False

    @classmethod
    def zero(cls) -> "IPoly":
        return cls(EdgePotential.zero(), False)

    @property
    def is_zero(self) -> bool:
        return self.poly.is_zero

    def __add__(self, other: "IPoly") -> "IPoly":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.imaginary != other.imaginary:
            raise ArithmeticError("adding real and imaginary parts breaks the coefficient parity")
        return IPoly(self.poly + other.poly, self.imaginary)

    def __mul__(self, other: "IPoly") -> "IPoly":
        p = self.poly * other.poly
        if self.imaginary and other.imaginary:
            p = p.scaled(-1)
        return IPoly(p, self.imaginary != other.imaginary)

    def scale(self, c, imaginary: bool = False) -> "IPoly":
        """Multiply by ``c`` (rational) or by ``i c`` when ``imaginary``."""
        p = self.poly.scaled(c)
        if imaginary and self.imaginary:
            p = p.scaled(-1)
        return IPoly(p, self.imaginary != imaginary)

    def derivative(self) -> "IPoly":
        return IPoly(self.poly.derivative(), self.imaginary)

    def antiderivative(self) -> "IPoly":
        return IPoly(self.poly.antiderivative(), self.imaginary)

    def value(self, x):
        val = np.polynomial.polynomial.polyval(x, self.poly.float_coeffs)
        return 1j * val if self.imaginary else val + 0j

    def exact(self, x) -> sp.Expr:
        val = _rat(self.poly.exact(x))
        return sp.I * val if self.imaginary else val

    def coefficients(self) -> list:
        """Exact complex coefficients, ascending degree."""
        unit = sp.I if self.imaginary else sp.Integer(1)
        return [unit * _rat(c) for c in self.poly.coeffs]


def _key(V: EdgePotential) -> tuple:
    return tuple(V.coeffs)


@lru_cache(maxsize=None)
def _beta_table(coeffs: tuple, sign: int, order: int) -> tuple[IPoly, ...]:
    V = EdgePotential(coeffs)
    table = [IPoly.zero(), _beta_one(V, sign)]  # beta_0, beta_1
    for m in range(1, order):
        acc = table[m].derivative()
        for j in range(0, m + 1):
            acc = acc + table[j] * table[m - j]
        table.append(acc.scale(Fraction(sign, 2), imaginary=True))
    return tuple(table)


def _beta_one(V: EdgePotential, sign: int) -> IPoly:
    return IPoly(V.scaled(Fraction(-sign, 2)), True)


def beta(V: EdgePotential, l: int, sign: int) -> IPoly:
    """WKB coefficient ``beta_{l,sign}`` as an exact tagged polynomial.

    ``beta_{-1} = sign*i``, ``beta_0 = 0``, ``beta_1 = -sign*(i/2) V`` and
    ``beta_{m+1} = sign*(i/2)(beta_m' + sum_{j=0}^m beta_j beta_{m-j})``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if l < -1:
        raise ValueError("l must be >= -1")
    if l == -1:
        return IPoly(EdgePotential([sign]), True)
    b = _beta_table(_key(V), sign, max(l, 1))[l]
    if not b.is_zero and b.imaginary != bool(l % 2):
        raise AssertionError("parity violated")  # structurally impossible; kept as a guard
    return b


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All ``m`` in ``N_0^parts`` with ``|m| = total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        bounds = (-1,) + cut + (total + parts - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(parts))


def w_coeff(V: EdgePotential, l: int) -> EdgePotential:
    """``w_l = sum_{n=1}^{l} sum_{|m|=l-n} i^n prod_j beta_{2 m_j + 1, +}`` (``w_0 = 1``)."""
    if l < 0:
        raise ValueError("l must be >= 0")
    if l == 0:
        return EdgePotential([1])
    total = IPoly.zero()
    for n in range(1, l + 1):
        for m in _compositions(l - n, n):
            term = IPoly(EdgePotential([1]), False)
            for mj in m:
                term = term * beta(V, 2 * mj + 1, 1)
            for _ in range(n):
                term = term.scale(1, imaginary=True)
            total = total + term
    if total.imaginary and not total.is_zero:
        raise AssertionError("w coefficient must be real")
    return total.poly


def inverse_wronskian_series(V: EdgePotential, order: int = 8) -> dict[int, IPoly]:
    """Coefficients of ``u_+ u_- / W~`` in powers ``k^{-(2l+1)}``, ``l <= order``.

    ``W~ = u_+ u_-' - u_+' u_-`` (``-2ik`` in plane-wave mode) is the
    normalisation that makes the kernel a resolvent of ``H``. The coefficient
    of ``k^{-(2l+1)}`` is ``-w_l / (2i) = (i/2) w_l``.
    """
    return {2 * l + 1: IPoly(w_coeff(V, l), False).scale(Fraction(1, 2), imaginary=True)
            for l in range(order + 1)}


def vertex_integral_series(V: EdgePotential) -> tuple[dict[int, sp.Expr], dict[int, sp.Expr]]:
    """Leading coefficients (powers ``k^{-2}``, ``k^{-4}``, ``k^{-5}``) of
    ``(1/W~) int_0^l u_+^2`` and of its mirror image at the ``x = l`` end
    (``(1/W~) int_0^l u_-(x)^2 dx / u_-(l)^2 * u_+(l) u_-(l)``), with ``W~``
    as in :func:`inverse_wronskian_series`.
    """
    l = V.length
    v0, vl = _rat(V.exact(0)), _rat(V.exact(l))
    d = V.derivative()
    d0, dl = _rat(d.exact(0)), _rat(d.exact(l))
    start = {2: sp.Rational(-1, 4), 4: -v0 / 4, 5: d0 / (8 * sp.I)}
    stop = {2: sp.Rational(-1, 4), 4: -vl / 4, 5: -dl / (8 * sp.I)}
    return start, stop


# ----------------------------------------------------------------------------
# vertex matrices


def _diag_beta(qg: QuantumGraph, j: int) -> sp.Matrix:
    """``bold-beta_j = diag(0, beta_{e,j,-}(0), -beta_{e,j,+}(l_e))`` in slot order."""
    g = qg.graph
    idx = g.index
    out = sp.zeros(g.E, g.E)
    for e in g.internal_edges:
        V = qg.potentials[e.id]
        out[idx.slot(e.id, "0"), idx.slot(e.id, "0")] = beta(V, j, -1).exact(0)
        out[idx.slot(e.id, "l"), idx.slot(e.id, "l")] = -beta(V, j, 1).exact(V.length)
    return out


def boundary_beta(qg: QuantumGraph, j: int) -> sp.Matrix:
    return _diag_beta(qg, j)


@dataclass(frozen=True)
class OmegaTable:
    betas: dict[int, sp.Matrix]
    lambdas: dict[int, sp.Matrix]
    omegas: dict[int, sp.Matrix]


def omega_table(qg: QuantumGraph, order: int) -> OmegaTable:
    """``bold-beta_j``, ``Lambda_m`` and ``Omega_j`` up to ``order``."""
    cond = qg.conditions
    E = cond.size
    iL = sp.I * cond.L_exact
    Pp = sp.eye(E) - cond.P_exact
    betas = {j: _diag_beta(qg, j) for j in range(1, order + 2)}
    powers = [sp.eye(E)]
    for _ in range(order + 1):
        powers.append(powers[-1] * iL)
    lambdas = {}
    for m in range(order + 1):
        acc = sp.zeros(E, E)
        for n in range(m + 1):
            acc += powers[n] * Pp * betas[m - n + 1].conjugate()
        lambdas[m] = sp.expand(acc)
    omegas = {0: sp.eye(E)}
    for j in range(1, order + 1):
        acc = sp.zeros(E, E)
        for n in range(1, j // 2 + 1):
            r = j - 2 * n
            lam = sp.zeros(E, E)
            for m in _compositions(r, n):
                prod = sp.eye(E)
                for mj in m:
                    prod = prod * lambdas[mj]
                lam += prod
            acc += sp.I**n * lam
        omegas[j] = sp.expand(acc)
    return OmegaTable(betas, lambdas, omegas)


def smatrix_series(qg: QuantumGraph, order: int = 3) -> list[sp.Matrix]:
    """``[S_inf, S_1, ..., S_order]`` with ``S(k) ~ sum_m k^{-m} S_m``."""
    if order > 6:
        raise ValueError("order must be at most 6")
    qg = qg.normalized()
    cond = qg.conditions
    E = cond.size
    P = cond.P_exact
    Pp = sp.eye(E) - P
    iL = sp.I * cond.L_exact
    S_inf = sp.eye(E) - 2 * P
    tab = omega_table(qg, max(order, 1))
    powers = [sp.eye(E)]
    for _ in range(order + 1):
        powers.append(powers[-1] * iL)
    out = [S_inf]
    for m in range(1, order + 1):
        acc = tab.omegas[m] * S_inf
        for n in range(1, m + 1):
            acc += 2 * tab.omegas[m - n] * powers[n]
        for l in range(0, m - 1):
            for r in range(0, m - 1 - l):
                n = m - 2 - r - l
                acc += sp.I * tab.omegas[l] * powers[r] * Pp * tab.betas[n + 1]
        out.append(sp.expand(acc))
    return out


def smatrix_closed_forms(qg: QuantumGraph) -> list[sp.Matrix]:
    """Closed forms of ``S_1, S_2, S_3`` in terms of ``P``, ``L`` and ``bold-beta``."""
    qg = qg.normalized()
    cond = qg.conditions
    E = cond.size
    P, L = cond.P_exact, cond.L_exact
    Pp = sp.eye(E) - P
    b1, b2 = _diag_beta(qg, 1), _diag_beta(qg, 2)
    S1 = 2 * sp.I * L
    S2 = 2 * (sp.I * Pp * b1 * P - L * L)
    S3 = 2 * (Pp * b1 * L - L * b1 * P + sp.I * Pp * b2 * Pp - sp.I * L**3)
    return [sp.expand(S1), sp.expand(S2), sp.expand(S3)]


# ----------------------------------------------------------------------------
# trace and heat coefficients


@dataclass(frozen=True)
class TraceCoefficients:
    """``b_1..b_5`` of ``tr(R_H - R_ref) ~ sum b_n k^{-n}``; ``kind`` is ``"D"`` or ``"N"``."""

    b: tuple[sp.Expr, ...]
    kind: str

    def numeric(self) -> np.ndarray:
        return np.array([complex(sp.N(x, 30)) for x in self.b])

    def partial_sum(self, k: complex, N: int) -> complex:
        vals = self.numeric()
        return complex(sum(vals[n - 1] * k ** (-n) for n in range(1, N + 1)))


@dataclass(frozen=True)
class HeatCoefficients:
    """``a_1..a_5`` of ``sum a_n t^{n/2 - 1}``; ``a3_alt`` is ``a_3`` without the ``1/sqrt(pi)``."""

    a: tuple[sp.Expr, ...]
    a3_alt: sp.Expr

    def numeric(self, a3_variant: str = "exact") -> np.ndarray:
        vals = [complex(sp.N(x, 30)) for x in self.a]
        if a3_variant == "alt":
            vals[2] = complex(sp.N(self.a3_alt, 30))
        return np.array(vals)

    def partial_sum(self, t, N: int, a3_variant: str = "exact"):
        a = self.numeric(a3_variant).real
        t = np.asarray(t, dtype=float)
        return sum(a[n - 1] * t ** (n / 2 - 1) for n in range(1, N + 1))


def _end_data(qg: QuantumGraph):
    """Per slot: (value of V at the end, inward derivative of V at the end)."""
    g = qg.graph
    idx = g.index
    vals = [sp.Integer(0)] * g.E
    ders = [sp.Integer(0)] * g.E
    for e in g.internal_edges:
        V = qg.potentials[e.id]
        d = V.derivative()
        i0, il = idx.slot(e.id, "0"), idx.slot(e.id, "l")
        vals[i0], ders[i0] = _rat(V.exact(0)), _rat(d.exact(0))
        vals[il], ders[il] = _rat(V.exact(V.length)), -_rat(d.exact(V.length))
    return vals, ders


def resolvent_trace_coeffs(qg: QuantumGraph, kind: str = "N") -> TraceCoefficients:
    """Exact ``b_1..b_5`` for the trace regularised by the Dirichlet (``"D"``) or
    Neumann (``"N"``) half-line resolvent on the external edges."""
    kind = kind.upper()
    if kind not in ("D", "N"):
        raise ValueError("kind must be 'D' or 'N'")
    qg = qg.normalized()
    g, cond = qg.graph, qg.conditions
    E = g.E
    I = sp.I
    P, L = cond.P_exact, cond.L_exact
    Pp = sp.eye(E) - P
    S_inf = sp.eye(E) - 2 * P
    length = sum((_rat(as_fraction(e.length)) for e in g.internal_edges), sp.Integer(0))
    int_V = sum((_rat(V.integrate_exact()) for V in qg.potentials.values()), sp.Integer(0))
    int_V2_dd = sum((_rat(V.derivative(2).integrate_exact()) - 3 * _rat((V * V).integrate_exact())
                     for V in qg.potentials.values()), sp.Integer(0))
    vals, ders = _end_data(qg)
    s = -1 if kind == "D" else 1  # external free-minus-reference contribution s/(4k^2)
    b1 = -length / (2 * I)
    b2 = -S_inf.trace() / 4 + s * sp.Rational(g.E_ex, 4)
    b3 = -int_V / (4 * I) + L.trace() / (2 * I)
    b4 = -sum((S_inf[i, i] * vals[i] for i in range(E)), sp.Integer(0)) / 4 + (L * L).trace() / 2
    b5 = (int_V2_dd / (16 * I)
          + sum((S_inf[i, i] * ders[i] for i in range(E)), sp.Integer(0)) / (8 * I)
          + 3 * sum((L[i, i] * vals[i] for i in range(E)), sp.Integer(0)) / (4 * I)
          - (L**3).trace() / (2 * I)
          + sum((Pp[i, i] * ders[i] for i in range(E)), sp.Integer(0)) / (8 * I))
    b = tuple(sp.nsimplify(sp.expand(x)) for x in (b1, b2, b3, b4, b5))
    return TraceCoefficients(b, kind)


def heat_coeffs(b: TraceCoefficients) -> HeatCoefficients:
    """``a_{2n} = (-1)^n b_{2n} / (n-1)!`` and ``a_{2n+1} = i (-1)^{n+1} b_{2n+1} / Gamma(n + 1/2)``."""
    a = []
    for idx, bn in enumerate(b.b, start=1):
        if idx % 2 == 0:
            n = idx // 2
            a.append(sp.expand((-1) ** n * bn / sp.factorial(n - 1)))
        else:
            n = (idx - 1) // 2
            gamma = sp.factorial(2 * n) * sp.sqrt(sp.pi) / (4**n * sp.factorial(n))
            a.append(sp.expand(sp.I * (-1) ** (n + 1) * bn / gamma))
    a3_alt = sp.expand(a[2] * sp.sqrt(sp.pi))
    return HeatCoefficients(tuple(a), a3_alt)
