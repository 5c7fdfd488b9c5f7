"""Fundamental solutions ``u_+-(k; x)`` of ``-u'' + V u = k^2 u`` on one edge.

The solutions are stored in scaled form ``u_s = exp(s i k x) v_s`` and
integrated with a Taylor-series method. For polynomial ``V`` the Taylor
coefficients of ``v`` obey a short linear recurrence, so every step is
evaluated to machine precision and the local expansions double as a dense
interpolant.

Normalisations (``mode``):

``"plane_wave"``
    ``u(0) = 1``, ``u'(0) = +-ik``; the Wronskian is exactly ``2ik``.
``"wkb"``
    ``u(0) = 1``, ``u'(0)`` from the WKB series, so that ``u_+-`` track the
    asymptotic solutions in the large-``k`` limit.
``"decaying"``
    ``u_+`` integrated backwards from the far end and rescaled to
    ``u_+(0) = 1``; ``u_-`` as in plane-wave mode. This is the stable choice
    for ``Im k > 0`` where the plane-wave ``u_+`` carries an exponentially
    growing admixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .potential import EdgePotential

__all__ = [
    "FundamentalPair",
    "solve_pair",
    "wronskian",
    "wkb_reference",
    "endpoint_batch",
    "zero_energy_basis",
    "MODES",
    "OVERFLOW_EXPONENT",
    "plane_wave_fallback",
]

MODES = ("plane_wave", "wkb", "decaying")
OVERFLOW_EXPONENT = 700.0
_MAX_TERMS = 90
_TERM_TOL = 1e-18
_GL_ORDER = 16
DECAY_SWITCH = 4.0  # below this growth-rate times length the plane-wave u_+ is used in decaying mode
WRONSKIAN_GUARD = 1e-2
NODE_GUARD = 1e-10
_GL = np.polynomial.legendre.leggauss(_GL_ORDER)


def _mesh(length: float, kmax: float, vmax: float) -> np.ndarray:
    """Uniform mesh with ``2|k| h <= 1.5`` and ``h sqrt(max|V|) <= 1``."""
    rate = max(2.0 * kmax / 1.5, math.sqrt(vmax), 4.0)
    n = max(2, math.ceil(length * rate))
    return np.linspace(0.0, length, n + 1)


def _shifted_table(coeffs: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Row ``j``: Taylor coefficients of ``V`` about ``centers[j]``."""
    d = len(coeffs)
    out = np.zeros((len(centers), d))
    for j in range(d):
        for i in range(j, d):
            out[:, j] += coeffs[i] * math.comb(i, j) * centers ** (i - j)
    return out


def _step(p: np.ndarray, a: np.ndarray, h: float, v: np.ndarray, dv: np.ndarray, keep: bool):
    """One Taylor step of ``v'' = a v' + V v`` with ``V`` given by ``p`` about the start."""
    c = [v, dv]
    scale = np.abs(v) + np.abs(dv) * abs(h) + 1e-300
    hp = abs(h)
    small = 0
    n = 0
    while True:
        acc = a * ((n + 1) * c[n + 1])
        for j in range(min(n, len(p) - 1) + 1):
            if p[j] != 0.0:
                acc = acc + p[j] * c[n - j]
        c.append(acc / ((n + 2) * (n + 1)))
        n += 1
        m = n + 1
        mag = np.max(np.abs(c[m]) * hp**m / scale)
        small = small + 1 if mag < _TERM_TOL else 0
        if (small >= 3 and m > len(p) + 2) or m >= _MAX_TERMS - 1:
            break
    cs = np.array(c)
    powers = h ** np.arange(len(c))
    v_new = np.tensordot(powers, cs, axes=(0, 0))
    dpow = np.arange(1, len(c)) * h ** np.arange(len(c) - 1)
    dv_new = np.tensordot(dpow, cs[1:], axes=(0, 0))
    return v_new, dv_new, (cs if keep else None)


def _step_scalar(p: list, a: complex, h: float, v: complex, dv: complex, keep: bool):
    """Scalar version of :func:`_step` (plain Python arithmetic is faster for one ``k``)."""
    c = [v, dv]
    scale = abs(v) + abs(dv) * abs(h) + 1e-300
    hp = abs(h)
    deg = len(p) - 1
    small = 0
    n = 0
    hm = hp
    while True:
        acc = a * ((n + 1) * c[n + 1])
        for j in range(min(n, deg) + 1):
            acc += p[j] * c[n - j]
        c.append(acc / ((n + 2) * (n + 1)))
        n += 1
        hm *= hp
        small = small + 1 if abs(c[n + 1]) * hm < _TERM_TOL * scale else 0
        if (small >= 3 and n + 1 > deg + 2) or n + 1 >= _MAX_TERMS - 1:
            break
    v_new = 0j
    dv_new = 0j
    for m in range(len(c) - 1, 0, -1):
        v_new = v_new * h + c[m]
        dv_new = dv_new * h + m * c[m]
    v_new = v_new * h + c[0]
    cs = np.array(c, dtype=complex)[:, None] if keep else None
    return v_new, dv_new, cs


def _propagate(V: EdgePotential, ks: np.ndarray, sign: int, nodes: np.ndarray, v0, dv0, keep: bool = False):
    """Integrate along ``nodes`` (ascending or descending).

    Returns final ``(v, dv)`` and, if ``keep``, the list of per-cell
    coefficient arrays expanded about the starting node of each cell.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    a = -2j * sign * ks
    v = np.broadcast_to(np.asarray(v0, dtype=complex), ks.shape).copy()
    dv = np.broadcast_to(np.asarray(dv0, dtype=complex), ks.shape).copy()
    table = _shifted_table(V.float_coeffs, nodes[:-1])
    store = []
    if ks.size == 1:
        a1, x, dx = complex(a[0]), complex(v[0]), complex(dv[0])
        for j in range(len(nodes) - 1):
            x, dx, cs = _step_scalar(table[j].tolist(), a1, float(nodes[j + 1] - nodes[j]), x, dx, keep)
            if keep:
                store.append(cs)
        return np.array([x]), np.array([dx]), store
    for j in range(len(nodes) - 1):
        h = nodes[j + 1] - nodes[j]
        v, dv, cs = _step(table[j], a, h, v, dv, keep)
        if keep:
            store.append(cs)
    return v, dv, store


class _Dense:
    """Piecewise Taylor interpolant on a mesh; one coefficient block per cell."""

    def __init__(self, nodes: np.ndarray, centers: np.ndarray, blocks: list[np.ndarray], factor: complex = 1.0):
        self.nodes = nodes
        self.centers = centers
        width = max(b.shape[0] for b in blocks)
        self.coef = np.zeros((len(blocks), width), dtype=complex)
        for i, b in enumerate(blocks):
            self.coef[i, : b.shape[0]] = b[:, 0] * factor
        n = np.arange(width)
        self.dcoef = np.zeros_like(self.coef)
        self.dcoef[:, :-1] = self.coef[:, 1:] * n[1:]

    def _cell(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(idx, 0, len(self.centers) - 1)

    def __call__(self, x, deriv: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cells = self._cell(x)
        t = x - self.centers[cells]
        coef = (self.dcoef if deriv else self.coef)[cells]
        out = np.zeros(x.shape, dtype=complex)
        for n in range(coef.shape[-1] - 1, -1, -1):
            out = out * t + coef[..., n]
        return out


@dataclass(frozen=True)
class FundamentalPair:
    """Scaled fundamental pair on one internal edge.

    ``v(s, x)`` and ``dv(s, x)`` are the scaled quantities, ``u``/``du`` the
    physical ones (``u_s = exp(s i k x) v_s``).
    """

    k: complex
    length: float
    mode: str
    nodes: np.ndarray
    _plus: _Dense
    _minus: _Dense
    edge: str | None = None

    def _dense(self, sign: int) -> _Dense:
        return self._plus if sign > 0 else self._minus

    def v(self, sign: int, x):
        return self._dense(sign)(x)

    def dv(self, sign: int, x):
        return self._dense(sign)(x, deriv=True)

    def _phase(self, sign: int, x):
        x = np.asarray(x, dtype=float)
        expo = np.max(np.abs((sign * 1j * self.k * x).real)) if x.size else 0.0
        if expo > OVERFLOW_EXPONENT:
            raise OverflowError("unscaled value requested beyond the overflow guard; use the scaled form")
        return np.exp(sign * 1j * self.k * x)

    def u(self, sign: int, x):
        return self._phase(sign, x) * self.v(sign, x)

    def du(self, sign: int, x):
        return self._phase(sign, x) * (sign * 1j * self.k * self.v(sign, x) + self.dv(sign, x))

    @cached_property
    def end_values(self) -> dict:
        """Scaled data ``v_s(0), v_s'(0), v_s(l), v_s'(l)`` for both signs."""
        ends = np.array([0.0, self.length])
        out = {}
        for s in (1, -1):
            val, der = self.v(s, ends), self.dv(s, ends)
            out[s] = (val[0], der[0], val[1], der[1])
        return out

    def inward_log_derivative_end(self, sign: int) -> complex:
        """``-u_s'(l) / u_s(l)``: inward derivative over value at the far end."""
        _, _, vl, dvl = self.end_values[sign]
        return -(sign * 1j * self.k + dvl / vl)

    def log_derivative_start(self, sign: int) -> complex:
        """``u_s'(0) / u_s(0)``."""
        v0, dv0, _, _ = self.end_values[sign]
        return sign * 1j * self.k + dv0 / v0

    @cached_property
    def wronskian(self) -> complex:
        """``u_+' u_- - u_+ u_-'`` evaluated at ``x = 0``."""
        vp, dvp, _, _ = self.end_values[1]
        vm, dvm, _, _ = self.end_values[-1]
        return 2j * self.k * vp * vm + dvp * vm - vp * dvm

    def wronskian_at(self, x: float) -> complex:
        vp, dvp = self.v(1, x), self.dv(1, x)
        vm, dvm = self.v(-1, x), self.dv(-1, x)
        return complex(2j * self.k * vp * vm + dvp * vm - vp * dvm)

    @cached_property
    def gauss_points(self) -> tuple[np.ndarray, np.ndarray]:
        t, w = _GL
        a, b = self.nodes[:-1, None], self.nodes[1:, None]
        x = 0.5 * (b - a) * t + 0.5 * (a + b)
        return x.ravel(), (0.5 * (b - a) * w).ravel()

    @cached_property
    def moments(self) -> tuple[complex, complex, complex]:
        """``(int e^{2ikx} v_+^2, int v_+ v_-, int e^{2ik(l-x)} v_-^2)`` over the edge."""
        x, w = self.gauss_points
        vp, vm = self.v(1, x), self.v(-1, x)
        k = self.k
        return (np.sum(w * np.exp(2j * k * x) * vp * vp),
                np.sum(w * vp * vm),
                np.sum(w * np.exp(2j * k * (self.length - x)) * vm * vm))


def plane_wave_fallback(k, length: float, v0, dv0, vmin: float):
    """Whether a decaying-mode ``u_+`` should be replaced by the plane-wave one.

    ``v0, dv0`` are the scaled value and derivative at ``x = 0`` of the solution
    integrated back from the far end; it gets rescaled to ``u_+(0) = 1``. The
    smallest local growth rate ``Im sqrt(k^2 - V)`` decides: when it times ``l``
    is large the decaying solution is node-free and independent of ``u_-``.
    When it is small (short edge, or ``k^2 - V`` real and positive inside a
    well) that solution may vanish at ``x = 0`` or coincide with ``u_-``, which
    fakes roots of ``det Z``; the plane-wave pair is well conditioned there
    anyway. The value and Wronskian tests are a relative safety net.
    """
    k = np.asarray(k, dtype=complex)
    v0, dv0 = np.asarray(v0, dtype=complex), np.asarray(dv0, dtype=complex)
    z = k * k - vmin  # Im sqrt(k^2 - V) is smallest where V is smallest
    gamma = np.sqrt(np.maximum(np.abs(z) - z.real, 0.0) / 2)
    ak = np.abs(k)
    du0 = 1j * k * v0 + dv0
    scale = np.abs(du0) + ak * np.abs(v0) + 1e-300
    wron = np.abs(du0 + 1j * k * v0) / scale  # W(u_raw, u_-) at 0, u_- = e^{-ikx} there
    node = ak * np.abs(v0) / scale
    return (gamma * length <= DECAY_SWITCH) | (wron < WRONSKIAN_GUARD) | (node < NODE_GUARD)


def _wkb_slope(V: EdgePotential, k: complex, sign: int, order: int) -> complex:
    from .asymptotics import beta

    total = 0j
    for l in range(0, order + 1):
        b = beta(V, l, sign)
        total += b.value(0.0) * k ** (-l)
    return total


def solve_pair(V: EdgePotential, k: complex, mode: str = "plane_wave", *, edge: str | None = None,
               wkb_order: int = 10) -> FundamentalPair:
    """Integrate the fundamental pair of one edge at spectral parameter ``k``."""
    if V.length is None:
        raise ValueError("edge potential needs a length")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    k = complex(k)
    if k == 0:
        raise ValueError("k = 0 is excluded")
    if not all(map(math.isfinite, (k.real, k.imag))):
        raise ValueError("k must be finite")
    l = V.length
    nodes = _mesh(l, abs(k), V.sup_abs())
    ks = np.array([k])

    if mode == "wkb":
        dp0, dm0 = _wkb_slope(V, k, 1, wkb_order), _wkb_slope(V, k, -1, wkb_order)
    else:
        dp0 = dm0 = 0.0

    _, _, sm = _propagate(V, ks, -1, nodes, 1.0, dm0, keep=True)
    minus = _Dense(nodes, nodes[:-1], sm)
    plus = None
    if mode == "decaying":
        back = nodes[::-1]
        _, _, sp_ = _propagate(V, ks, 1, back, 1.0, 0.0, keep=True)
        raw = _Dense(nodes, back[:-1][::-1], sp_[::-1])
        v0 = raw(np.array([0.0]))[0]
        if not plane_wave_fallback(k, l, v0, raw(np.array([0.0]), deriv=True)[0], V.minimum()):
            plus = _Dense(nodes, back[:-1][::-1], sp_[::-1], factor=1.0 / v0)
    if plus is None:
        _, _, sp_ = _propagate(V, ks, 1, nodes, 1.0, dp0, keep=True)
        plus = _Dense(nodes, nodes[:-1], sp_)
    pair = FundamentalPair(k, l, mode, nodes, plus, minus, edge)
    if not all(np.isfinite(z) for s in (1, -1) for z in pair.end_values[s]):
        raise OverflowError(f"scaled solutions overflow at k = {k}; use mode='decaying' for Im k > 0")
    return pair


def wronskian(pair: FundamentalPair) -> complex:
    return pair.wronskian


def endpoint_batch(V: EdgePotential, ks, sign: int) -> tuple[np.ndarray, np.ndarray]:
    """Plane-wave ``(v_s(l), v_s'(l))`` for many ``k`` at once (no dense output)."""
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    nodes = _mesh(V.length, float(np.max(np.abs(ks))), V.sup_abs())
    v, dv, _ = _propagate(V, ks, sign, nodes, 1.0, 0.0)
    return v, dv


def zero_energy_basis(V: EdgePotential) -> tuple[tuple[float, float], tuple[float, float]]:
    """Values ``(u(l), u'(l))`` of the solutions of ``-u'' + V u = 0`` with
    ``(u, u')(0) = (1, 0)`` and ``(0, 1)``."""
    nodes = _mesh(V.length, 0.0, V.sup_abs())
    ks = np.zeros(2, dtype=complex)
    v, dv, _ = _propagate(V, ks, 1, nodes, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    return (v[0].real, dv[0].real), (v[1].real, dv[1].real)


def wkb_reference(V: EdgePotential, k: complex, order: int):
    """``x -> exp(sum_{l=-1}^{order} k^{-l} int_0^x beta_{l,+})``."""
    from .asymptotics import beta

    if order > 8:
        raise ValueError("order must be at most 8")
    k = complex(k)
    prims = [beta(V, l, 1).antiderivative() for l in range(0, order + 1)]

    def ref(x):
        x = np.asarray(x, dtype=float)
        expo = 1j * k * x
        for l, P in enumerate(prims):
            expo = expo + k ** (-l) * P.value(x)
        return np.exp(expo)

    return ref
