"""Self-adjoint vertex conditions ``(P + L) psi + P_perp psi' = 0``."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

import numpy as np
import sympy as sp

from .graph import MetricGraph
from .potential import as_fraction

__all__ = [
    "ConditionsError",
    "Custom",
    "Delta",
    "VertexConditions",
    "standard_conditions",
    "check_conditions",
]

INVARIANT_TOL = 1e-10


class ConditionsError(ValueError):
    """Vertex conditions violating the projector / self-adjointness rules."""


@dataclass(frozen=True)
class Custom:
    """User block ``(P_v, L_v)``; rows follow the vertex's slot order."""

    P: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", np.array(self.P, dtype=complex))
        object.__setattr__(self, "L", np.array(self.L, dtype=complex))


@dataclass(frozen=True)
class Delta:
    """Continuity plus ``sum psi' = -strength * psi(v)`` (inward derivatives).

    Positive strength is attractive. On a degree-one vertex this is the
    Robin condition ``psi'(0) = -strength * psi(0)``.
    """

    strength: float


Kind = Union[str, Custom, Delta]
_KINDS = ("kirchhoff", "dirichlet", "neumann")


def _exact_entry(z) -> sp.Expr:
    z = complex(z)
    re, im = as_fraction(z.real), as_fraction(z.imag)
    return sp.Rational(re.numerator, re.denominator) + sp.I * sp.Rational(im.numerator, im.denominator)


def _block(kind: Kind, d: int) -> tuple[sp.Matrix, sp.Matrix]:
    if isinstance(kind, str):
        name = kind.lower()
        if name == "kirchhoff":
            return sp.eye(d) - sp.ones(d, d) / d, sp.zeros(d, d)
        if name == "dirichlet":
            return sp.eye(d), sp.zeros(d, d)
        if name == "neumann":
            return sp.zeros(d, d), sp.zeros(d, d)
        raise ConditionsError(f"unknown condition kind {kind!r}")
    if isinstance(kind, Delta):
        c = as_fraction(kind.strength)
        c = sp.Rational(c.numerator, c.denominator)
        return sp.eye(d) - sp.ones(d, d) / d, c * sp.ones(d, d) / d**2
    if isinstance(kind, Custom):
        if kind.P.shape != (d, d) or kind.L.shape != (d, d):
            raise ConditionsError(f"custom block must be {d}x{d}, got P{kind.P.shape}, L{kind.L.shape}")
        P = sp.Matrix(d, d, lambda i, j: _exact_entry(kind.P[i, j]))
        L = sp.Matrix(d, d, lambda i, j: _exact_entry(kind.L[i, j]))
        return P, L
    raise ConditionsError(f"unknown condition kind {kind!r}")


def check_conditions(P: np.ndarray, L: np.ndarray, tol: float = INVARIANT_TOL) -> list[str]:
    """Return the list of violated invariants (empty when valid)."""
    P = np.asarray(P, dtype=complex)
    L = np.asarray(L, dtype=complex)
    n = P.shape[0]
    problems = []
    scale = max(1.0, float(np.max(np.abs(L), initial=0.0)))
    if np.max(np.abs(P @ P - P), initial=0.0) > tol:
        problems.append("P is not idempotent")
    if np.max(np.abs(P - P.conj().T), initial=0.0) > tol:
        problems.append("P is not self-adjoint")
    if np.max(np.abs(L - L.conj().T), initial=0.0) > tol * scale:
        problems.append("L is not self-adjoint")
    Q = np.eye(n) - P
    if np.max(np.abs(Q @ L @ Q - L), initial=0.0) > tol * scale:
        problems.append("P_perp L P_perp != L")
    return problems


@dataclass(frozen=True)
class VertexConditions:
    """Assembled ``P`` and ``L`` in boundary-slot order, kept exactly as well."""

    P_exact: sp.Matrix
    L_exact: sp.Matrix
    kinds: tuple[tuple[str, Kind], ...] | None = None

    @cached_property
    def P(self) -> np.ndarray:
        return np.array(self.P_exact.evalf(), dtype=complex).reshape(self.P_exact.shape)

    @cached_property
    def L(self) -> np.ndarray:
        return np.array(self.L_exact.evalf(), dtype=complex).reshape(self.L_exact.shape)

    @cached_property
    def P_perp(self) -> np.ndarray:
        return np.eye(self.P.shape[0]) - self.P

    @property
    def local(self) -> bool:
        return self.kinds is not None

    @property
    def size(self) -> int:
        return self.P_exact.shape[0]

    def kind_of(self, vertex: str) -> Kind:
        if self.kinds is None:
            raise ConditionsError("conditions are not local")
        return dict(self.kinds)[vertex]

    @classmethod
    def from_matrices(cls, P, L, tol: float = INVARIANT_TOL) -> "VertexConditions":
        P = np.asarray(P, dtype=complex)
        L = np.asarray(L, dtype=complex)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape != L.shape:
            raise ConditionsError("P and L must be square matrices of equal size")
        problems = check_conditions(P, L, tol)
        if problems:
            raise ConditionsError("; ".join(problems))
        n = P.shape[0]
        Pe = sp.Matrix(n, n, lambda i, j: _exact_entry(P[i, j]))
        Le = sp.Matrix(n, n, lambda i, j: _exact_entry(L[i, j]))
        return cls(Pe, Le, None)


def standard_conditions(graph: MetricGraph, kinds: Mapping[str, Kind] | None = None, default: Kind = "kirchhoff",
                        tol: float = INVARIANT_TOL) -> VertexConditions:
    """Assemble local conditions; vertices missing from ``kinds`` get ``default``."""
    kinds = dict(kinds or {})
    unknown = set(map(str, kinds)) - set(graph.vertices)
    if unknown:
        raise ConditionsError(f"conditions given for unknown vertices {sorted(unknown)}")
    kinds = {str(k): v for k, v in kinds.items()}
    idx = graph.index
    E = len(idx)
    P = sp.zeros(E, E)
    L = sp.zeros(E, E)
    resolved = []
    for v in graph.vertices:
        kind = kinds.get(v, default)
        slots = idx.vertex_slots(v)
        d = len(slots)
        Pv, Lv = _block(kind, d)
        if isinstance(kind, Custom):
            problems = check_conditions(kind.P, kind.L, tol)
            if problems:
                raise ConditionsError(f"vertex {v!r}: " + "; ".join(problems))
        for a, i in enumerate(slots):
            for b, j in enumerate(slots):
                P[i, j] = Pv[a, b]
                L[i, j] = Lv[a, b]
        resolved.append((v, kind))
    return VertexConditions(P, L, tuple(resolved))
