"""Polynomial edge potentials with exact rational arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational, Real
from typing import Iterable, Sequence

import numpy as np
import sympy as sp

__all__ = ["EdgePotential", "as_fraction"]

_X = sp.Symbol("x", real=True)


def as_fraction(value) -> Fraction:
    """Convert a coefficient to an exact Fraction.

    Floats are taken at their exact binary value; strings such as ``"1/3"``
    are parsed exactly.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a valid coefficient")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (Real, np.floating, np.integer)):
        f = float(value)
        if not np.isfinite(f):
            raise ValueError(f"non-finite potential coefficient {value!r}")
        return Fraction(f)
    if isinstance(value, sp.Rational):
        return Fraction(int(value.p), int(value.q))
    raise TypeError(f"cannot interpret {value!r} as a real coefficient")


def _trim(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    c = list(coeffs)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(c) if c else (Fraction(0),)


@dataclass(frozen=True)
class EdgePotential:
    """Real polynomial ``V(x) = sum_j c_j x^j`` on ``[0, length]``.

    ``length=None`` means no range check (used for the symbolic layer and for
    external edges, which carry ``V = 0``).
    """

    coeffs: tuple[Fraction, ...]
    length: float | None = None

    def __init__(self, coeffs: Iterable = (0,), length: float | None = None):
        object.__setattr__(self, "coeffs", _trim([as_fraction(c) for c in coeffs]))
        if length is not None:
            length = float(length)
            if not (np.isfinite(length) and length > 0):
                raise ValueError(f"edge length must be positive and finite, got {length}")
        object.__setattr__(self, "length", length)

    @classmethod
    def zero(cls, length: float | None = None) -> "EdgePotential":
        return cls((0,), length)

    def with_length(self, length: float | None) -> "EdgePotential":
        return EdgePotential(self.coeffs, length)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs == (Fraction(0),)

    @cached_property
    def float_coeffs(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs], dtype=float)

    @cached_property
    def poly(self) -> sp.Poly:
        """The potential as a sympy polynomial over QQ in ``x``."""
        terms = [sp.Rational(c.numerator, c.denominator) for c in self.coeffs]
        return sp.Poly(list(reversed(terms)), _X, domain=sp.QQ)

    def _check(self, x) -> None:
        if self.length is None:
            return
        xa = np.asarray(x, dtype=float)
        tol = 1e-12 * max(1.0, self.length)
        if np.any(xa < -tol) or np.any(xa > self.length + tol):
            raise ValueError(f"coordinate outside [0, {self.length}]")

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate in double precision (vectorised)."""
        self._check(x)
        return np.polynomial.polynomial.polyval(x, self.float_coeffs)

    def exact(self, x) -> Fraction:
        """Evaluate exactly at a rational (or exactly representable) point."""
        self._check(float(x))
        xf = as_fraction(x)
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * xf + c
        return acc

    def derivative(self, n: int = 1) -> "EdgePotential":
        if n < 0:
            raise ValueError("derivative order must be non-negative")
        c = list(self.coeffs)
        for _ in range(n):
            c = [j * c[j] for j in range(1, len(c))] or [Fraction(0)]
        return EdgePotential(c, self.length)

    def antiderivative(self) -> "EdgePotential":
        """Antiderivative vanishing at 0."""
        c = [Fraction(0)] + [cj / (j + 1) for j, cj in enumerate(self.coeffs)]
        return EdgePotential(c, self.length)

    def integrate(self, a=0, b=None) -> float:
        return float(self.integrate_exact(a, b))

    def integrate_exact(self, a=0, b=None) -> Fraction:
        if b is None:
            if self.length is None:
                raise ValueError("upper bound required for a potential without length")
            b = self.length
        if float(a) > float(b):
            raise ValueError("integration bounds must satisfy a <= b")
        prim = self.antiderivative()
        return prim.exact(b) - prim.exact(a)

    def shifted(self, a) -> "EdgePotential":
        """The polynomial ``x -> V(x + a)`` (exact), without a length."""
        a = as_fraction(a)
        out = [Fraction(0)] * len(self.coeffs)
        for j, c in enumerate(self.coeffs):
            binom = 1
            for i in range(j + 1):
                out[i] += c * binom * a ** (j - i)
                binom = binom * (j - i) // (i + 1)
        return EdgePotential(out)

    def scaled(self, c) -> "EdgePotential":
        c = as_fraction(c)
        return EdgePotential([a * c for a in self.coeffs], self.length)

    def __mul__(self, other: "EdgePotential") -> "EdgePotential":
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return EdgePotential(out, self.length)

    def __add__(self, other: "EdgePotential") -> "EdgePotential":
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [Fraction(0)] * (n - len(self.coeffs))
        b = list(other.coeffs) + [Fraction(0)] * (n - len(other.coeffs))
        return EdgePotential([x + y for x, y in zip(a, b)], self.length)

    def sup_abs(self) -> float:
        """max |V| on the edge (on [0, 1] when no length is set)."""
        top = 1.0 if self.length is None else self.length
        crit = [0.0, top]
        d = self.derivative().float_coeffs
        if len(d) > 1 and np.any(d != 0):
            for r in np.polynomial.polynomial.polyroots(d):
                if abs(r.imag) < 1e-12 and 0 <= r.real <= top:
                    crit.append(r.real)
        return float(np.max(np.abs(np.polynomial.polynomial.polyval(crit, self.float_coeffs))))

    def minimum(self) -> float:
        top = 1.0 if self.length is None else self.length
        crit = [0.0, top]
        d = self.derivative().float_coeffs
        if len(d) > 1 and np.any(d != 0):
            for r in np.polynomial.polynomial.polyroots(d):
                if abs(r.imag) < 1e-12 and 0 <= r.real <= top:
                    crit.append(r.real)
        return float(np.min(np.polynomial.polynomial.polyval(crit, self.float_coeffs)))

    def to_json(self) -> list:
        return [c.numerator if c.denominator == 1 else str(c) for c in self.coeffs]
