"""Secular matrices, the unitary matrix ``U(k)`` and eigenvalue search.

Unknowns of the secular system are ordered like the boundary slots:
``gamma_e`` (external edges, ``psi = gamma e^{ikx}``), then ``alpha_e`` and
``beta_e`` (internal edges, ``psi = alpha u_+ + beta u_-``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .fundamental import FundamentalPair, endpoint_batch, plane_wave_fallback, solve_pair, zero_energy_basis
from .fundamental import _mesh, _propagate  # batched decaying solves
from .problem import QuantumGraph

__all__ = [
    "EPS0",
    "DELTA",
    "ExcludedRegionError",
    "SingularSMatrixError",
    "EdgeEnds",
    "SecularMatrices",
    "assemble",
    "secular_det",
    "Eigenvalue",
    "SpectralResult",
    "find_eigenvalues",
    "find_negative_eigenvalues",
    "positive_roots_U",
    "positive_roots_detZ",
    "zero_mode_multiplicity",
    "Eigenfunction",
    "eigenfunctions",
]

log = logging.getLogger(__name__)

EPS0 = 1e-3
DELTA = 0.1
SVD_THRESHOLD = 1e-7


class ExcludedRegionError(ValueError):
    """``k`` lies in the excluded disc around 0."""


class SingularSMatrixError(ArithmeticError):
    """``P + L + P_perp conj(D(conj k))`` is singular."""


def default_mode(k: complex) -> str:
    k = complex(k)
    return "plane_wave" if abs(k.imag) <= 1e-14 * max(1.0, abs(k)) else "decaying"


@dataclass(frozen=True)
class EdgeEnds:
    """Scaled endpoint data of the fundamental pairs, arrays over ``k``.

    ``u_s(0) = 1``; ``d0[s] = v_s'(0)``; ``vl[s] = v_s(l)``; ``dl[s] = v_s'(l)``.
    """

    length: float
    d0p: np.ndarray
    d0m: np.ndarray
    vlp: np.ndarray
    dlp: np.ndarray
    vlm: np.ndarray
    dlm: np.ndarray

    @classmethod
    def from_pair(cls, pair: FundamentalPair) -> "EdgeEnds":
        p, m = pair.end_values[1], pair.end_values[-1]
        a = lambda z: np.array([z], dtype=complex)  # noqa: E731
        return cls(pair.length, a(p[1]), a(m[1]), a(p[2]), a(p[3]), a(m[2]), a(m[3]))


def _free_ends(length: float, n: int) -> EdgeEnds:
    one, zero = np.ones(n, dtype=complex), np.zeros(n, dtype=complex)
    return EdgeEnds(length, zero, zero, one, zero, one, zero)


def edge_ends_batch(qg: QuantumGraph, ks: np.ndarray, mode: str) -> dict[str, EdgeEnds]:
    """Endpoint data of every internal edge for many ``k`` (``plane_wave`` or ``decaying``)."""
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    out = {}
    for e in qg.graph.internal_edges:
        V = qg.potentials[e.id]
        if V.is_zero:
            out[e.id] = _free_ends(e.length, len(ks))
            continue
        vm, dvm = endpoint_batch(V, ks, -1)
        if mode == "plane_wave":
            vp, dvp = endpoint_batch(V, ks, 1)
            out[e.id] = EdgeEnds(e.length, np.zeros_like(ks), np.zeros_like(ks), vp, dvp, vm, dvm)
        elif mode == "decaying":
            nodes = _mesh(e.length, float(np.max(np.abs(ks))), V.sup_abs())[::-1]
            r0, rd0, _ = _propagate(V, ks, 1, nodes, 1.0, 0.0)
            d0p, vlp, dlp = rd0 / r0, 1.0 / r0, np.zeros_like(ks)
            swap = plane_wave_fallback(ks, e.length, r0, rd0, V.minimum())
            if np.any(swap):
                d0p[swap] = 0.0
                vlp[swap], dlp[swap] = endpoint_batch(V, ks[swap], 1)
            out[e.id] = EdgeEnds(e.length, d0p, np.zeros_like(ks), vlp, dlp, vm, dvm)
        else:
            raise ValueError(f"unsupported batch mode {mode!r}")
    return out


class _Blocks:
    """Batched construction of all secular matrices from endpoint data."""

    def __init__(self, qg: QuantumGraph, ks: np.ndarray, ends: dict[str, EdgeEnds]):
        g = qg.graph
        idx = g.index
        self.qg = qg
        self.ks = ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        n, E = len(ks), g.E
        self.E = E
        ik = 1j * ks
        self.ext = np.arange(idx.n_ext)
        i0 = np.array([idx.slot(e.id, "0") for e in g.internal_edges], dtype=int)
        il = np.array([idx.slot(e.id, "l") for e in g.internal_edges], dtype=int)
        self.i0, self.il = i0, il

        def stack(attr):
            return np.array([getattr(ends[e.id], attr) for e in g.internal_edges]).reshape(len(i0), n).T

        lengths = np.array([e.length for e in g.internal_edges])
        ph = np.exp(1j * ks[:, None] * lengths[None, :])  # e^{ikl}, shape (n, E_int)
        d0p, d0m = stack("d0p"), stack("d0m")
        vlp, dlp, vlm, dlm = stack("vlp"), stack("dlp"), stack("vlm"), stack("dlm")
        ikc = ik[:, None]
        self.up_l = ph * vlp  # u_+(l)
        self.um_l_inv = ph / vlm  # 1 / u_-(l)
        self.dup0 = ikc + d0p  # u_+'(0)
        self.dum0 = -ikc + d0m  # u_-'(0)
        self.dup_l = ph * (ikc * vlp + dlp)  # u_+'(l)
        self.logm_l = -ikc + dlm / vlm  # u_-'(l) / u_-(l)
        self.logp_l = ikc + dlp / vlp  # u_+'(l) / u_+(l)
        self.vlp, self.vlm, self.ph = vlp, vlm, ph

        D = np.zeros((n, E), dtype=complex)
        Dt = np.zeros((n, E), dtype=complex)
        D[:, self.ext] = -ik[:, None]
        Dt[:, self.ext] = ik[:, None]
        D[:, i0], Dt[:, i0] = self.dum0, self.dup0
        D[:, il], Dt[:, il] = -self.logp_l, -self.logm_l
        self.D, self.Dt = D, Dt

        T = np.zeros((n, E, E), dtype=complex)
        T[:, i0, il] = self.um_l_inv
        T[:, il, i0] = self.up_l
        self.T = T

        cond = qg.conditions
        self.A = cond.P + cond.L
        self.B = cond.P_perp

    def _diag(self, d: np.ndarray) -> np.ndarray:
        out = np.zeros(d.shape + (d.shape[-1],), dtype=complex)
        idx = np.arange(d.shape[-1])
        out[..., idx, idx] = d
        return out

    @cached_property
    def S(self) -> np.ndarray:
        left = self.A + self.B @ self._diag(self.Dt)
        right = self.A + self.B @ self._diag(self.D)
        cond = np.linalg.cond(left)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e14):
            raise SingularSMatrixError("P + L + P_perp conj(D(conj k)) is numerically singular")
        return -np.linalg.solve(left, right)

    @cached_property
    def Zs(self) -> np.ndarray:
        """``Z conj(R_1(conj k))^{-1}``: same zeros as ``Z``, bounded entries."""
        n, E = len(self.ks), self.E
        X = np.zeros((n, E, E), dtype=complex)
        Y = np.zeros((n, E, E), dtype=complex)
        ext, i0, il = self.ext, self.i0, self.il
        X[:, ext, ext] = 1.0
        Y[:, ext, ext] = 1j * self.ks[:, None]
        X[:, i0, i0] = 1.0
        X[:, il, i0] = self.up_l
        X[:, i0, il] = self.um_l_inv
        X[:, il, il] = 1.0
        Y[:, i0, i0] = self.dup0
        Y[:, il, i0] = -self.dup_l
        Y[:, i0, il] = self.dum0 * self.um_l_inv
        Y[:, il, il] = -self.logm_l
        return self.A @ X + self.B @ Y

    def um_l(self) -> np.ndarray:
        expo = np.max(np.abs((1j * self.ks[:, None] * np.array([e.length for e in self.qg.graph.internal_edges])).real),
                      initial=0.0)
        if expo > 700:
            raise OverflowError("u_-(l) overflows; use the scaled matrices")
        return 1.0 / self.um_l_inv

    @cached_property
    def Z(self) -> np.ndarray:
        if len(self.il) == 0:
            return self.Zs
        R1t = np.ones((len(self.ks), self.E), dtype=complex)
        R1t[:, self.il] = self.um_l()
        return self.Zs * R1t[:, None, :]

    @cached_property
    def R(self) -> np.ndarray:
        r = np.ones((len(self.ks), self.E))
        r[:, self.il] = np.abs(self.vlp) * np.abs(self.ph)
        return r

    @cached_property
    def U(self) -> np.ndarray:
        if np.any(np.abs(self.ks.imag) > 1e-12 * np.maximum(1.0, np.abs(self.ks))):
            raise ValueError("U(k) is defined for real k only")
        r = self.R
        ST = self.S @ self.T
        return ST * r[:, None, :] / r[:, :, None]


@dataclass
class SecularMatrices:
    """All characteristic matrices at one ``k`` (``E x E`` complex arrays)."""

    k: complex
    mode: str
    blocks: _Blocks
    pairs: dict[str, FundamentalPair] = field(default_factory=dict)

    def _one(self, arr):
        return arr[0]

    @property
    def S(self) -> np.ndarray:
        return self.blocks.S[0]

    @property
    def T(self) -> np.ndarray:
        return self.blocks.T[0]

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.blocks.D[0])

    @property
    def D_tilde(self) -> np.ndarray:
        """``conj(D(conj k))``."""
        return np.diag(self.blocks.Dt[0])

    @property
    def Z(self) -> np.ndarray:
        return self.blocks.Z[0]

    @property
    def Z_scaled(self) -> np.ndarray:
        return self.blocks.Zs[0]

    @property
    def X(self) -> np.ndarray:
        b = self.blocks
        X = np.zeros((b.E, b.E), dtype=complex)
        X[b.ext, b.ext] = 1.0
        X[b.i0, b.i0] = 1.0
        X[b.i0, b.il] = 1.0
        X[b.il, b.i0] = b.up_l[0]
        X[b.il, b.il] = b.um_l()[0]
        return X

    @property
    def Y(self) -> np.ndarray:
        b = self.blocks
        Y = np.zeros((b.E, b.E), dtype=complex)
        Y[b.ext, b.ext] = 1j * self.k
        Y[b.i0, b.i0] = b.dup0[0]
        Y[b.i0, b.il] = b.dum0[0]
        Y[b.il, b.i0] = -b.dup_l[0]
        Y[b.il, b.il] = -b.logm_l[0] * b.um_l()[0]
        return Y

    @property
    def R1(self) -> np.ndarray:
        b = self.blocks
        d = np.ones(b.E, dtype=complex)
        d[b.il] = b.up_l[0]
        return np.diag(d)

    @property
    def R1_tilde(self) -> np.ndarray:
        """``conj(R_1(conj k))``."""
        b = self.blocks
        d = np.ones(b.E, dtype=complex)
        d[b.il] = b.um_l()[0]
        return np.diag(d)

    @property
    def R2(self) -> np.ndarray:
        b = self.blocks
        d = np.empty(b.E, dtype=complex)
        d[b.ext] = -1j * self.k
        d[b.i0] = b.dum0[0]
        d[b.il] = -b.dup_l[0]
        return np.diag(d)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.blocks.R[0])

    @property
    def U(self) -> np.ndarray:
        return self.blocks.U[0]


def _check_k(k: complex) -> complex:
    k = complex(k)
    if abs(k) < EPS0:
        raise ExcludedRegionError(f"|k| = {abs(k):.3g} lies in the excluded disc of radius {EPS0}")
    if k.imag < -1e-14 * abs(k):
        raise ValueError("k must lie in the closed upper half plane")
    return k


def assemble(qg: QuantumGraph, k: complex, mode: str | None = None) -> SecularMatrices:
    """Secular matrices at ``k``; ``mode`` picks the fundamental system."""
    k = _check_k(k)
    qg = qg.normalized()
    mode = mode or default_mode(k)
    pairs = {e.id: solve_pair(qg.potentials[e.id], k, mode, edge=e.id) for e in qg.graph.internal_edges}
    ends = {eid: EdgeEnds.from_pair(p) for eid, p in pairs.items()}
    return SecularMatrices(k, mode, _Blocks(qg, np.array([k]), ends), pairs)


def secular_det(qg: QuantumGraph, k: complex) -> tuple[complex, complex | None]:
    """``(det Z(k), det(1 - U(k)))``; the second entry is ``None`` unless ``k`` is real."""
    m = assemble(qg, k)
    dz = complex(np.linalg.det(m.Z))
    du = None
    if m.mode == "plane_wave":
        du = complex(np.linalg.det(np.eye(len(m.U)) - m.U))
    return dz, du


# ----------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True)
class Eigenvalue:
    lam: float
    k: complex
    multiplicity: int
    residual: float


@dataclass
class SpectralResult:
    eigenvalues: list[Eigenvalue]
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.array([e.lam for e in self.eigenvalues for _ in range(e.multiplicity)])

    def count(self) -> int:
        return sum(e.multiplicity for e in self.eigenvalues)


class _UScan:
    """Evaluates ``U(k)`` eigenphases and the counting function on real ``k``."""

    def __init__(self, qg: QuantumGraph):
        self.qg = qg
        self.E = qg.graph.E

    def blocks(self, ks) -> _Blocks:
        ks = np.atleast_1d(np.asarray(ks, dtype=float)).astype(complex)
        return _Blocks(self.qg, ks, edge_ends_batch(self.qg, ks, "plane_wave"))

    def phases(self, ks) -> tuple[np.ndarray, np.ndarray]:
        """``(arg det U, sum of eigenphases in [0, 2 pi))``."""
        U = self.blocks(ks).U
        w = np.linalg.eigvals(U)
        theta = np.mod(np.angle(w), 2 * np.pi)
        return np.angle(np.prod(w, axis=-1)), theta.sum(axis=-1)

    def indicator(self, k: float, phi_ref: float, ang_ref: float) -> float:
        """Real function ``prod sin(phi_j / 2)`` with continuous phases anchored at a reference."""
        b = self.blocks([k])
        U = b.U[0]
        w = np.linalg.eigvals(U)
        ang = float(np.angle(np.prod(w)))
        phi = phi_ref + _wrap(ang - ang_ref)
        det = np.linalg.det(np.eye(self.E) - U)
        return float((det * np.exp(-0.5j * phi) / (-2j) ** self.E).real)

    def counting(self, k: float, phi_ref: float, ang_ref: float) -> tuple[float, float, int]:
        ang, tsum = self.phases([k])
        phi = phi_ref + _wrap(float(ang[0]) - ang_ref)
        return float(ang[0]), phi, int(round((phi - float(tsum[0])) / (2 * np.pi)))


def _wrap(x: float) -> float:
    return (x + np.pi) % (2 * np.pi) - np.pi


def _svd_multiplicity(M: np.ndarray) -> tuple[int, float]:
    s = np.linalg.svd(M, compute_uv=False)
    top = max(s[0], 1e-300)
    return int(np.sum(s < SVD_THRESHOLD * top)), float(s[-1] / top)


def positive_roots_U(qg: QuantumGraph, k_max: float, k_min: float = EPS0, safety: float = 4.0,
                     tol: float = 1e-12) -> list[tuple[float, int, float]]:
    """Zeros of ``det(1 - U(k))`` on ``[k_min, k_max]`` as ``(k, multiplicity, residual)``."""
    qg = qg.normalized()
    scan = _UScan(qg)
    Ltot = max(qg.graph.total_length, 1e-300)
    h = np.pi / (4.0 * Ltot * safety)
    offset = h * (math.sqrt(5) - 1) / 2 * 0.37  # irrational shift keeps lattice roots off the grid
    n = max(2, math.ceil((k_max - k_min) / h) + 1)
    grid = k_min + offset + h * np.arange(-1, n + 1)
    grid = grid[(grid > 0)]
    grid = np.concatenate([[k_min], grid[grid > k_min]])
    ang, tsum = scan.phases(grid)
    phi = np.unwrap(ang)
    count = np.rint((phi - tsum) / (2 * np.pi)).astype(int)

    roots: list[tuple[float, int, float]] = []

    def refine(a, b, phia, anga, na, nb, depth=0):
        m = nb - na
        if m == 0:
            return
        if b - a <= tol:
            roots.append(((a + b) / 2, abs(m), float("nan")))
            return
        if abs(m) == 1 and depth < 80:
            fa = scan.indicator(a, phia, anga)
            fb = scan.indicator(b, phia, anga)
            if fa * fb < 0:
                r = optimize.brentq(lambda x: scan.indicator(x, phia, anga), a, b, xtol=tol * 1e-2, rtol=1e-15,
                                    maxiter=200)
                roots.append((r, 1, float("nan")))
                return
        mid = 0.5 * (a + b)
        angm, phim, nm = scan.counting(mid, phia, anga)
        refine(a, mid, phia, anga, na, nm, depth + 1)
        refine(mid, b, phim, angm, nm, nb, depth + 1)

    for i in range(len(grid) - 1):
        if count[i + 1] != count[i] and grid[i + 1] > k_min:
            refine(grid[i], grid[i + 1], phi[i], ang[i], count[i], count[i + 1])

    out = []
    for r, m, _ in roots:
        if r > k_max:
            continue
        U = scan.blocks([r]).U[0]
        msvd, res = _svd_multiplicity(np.eye(scan.E) - U)
        if msvd != m:
            log.info("root k=%.12g: counting multiplicity %d, SVD multiplicity %d", r, m, msvd)
        out.append((float(r), m, res))
    out.sort()
    return out


def positive_roots_detZ(qg: QuantumGraph, k_max: float, k_min: float = EPS0, safety: float = 4.0,
                        tol: float = 1e-10) -> list[tuple[float, int]]:
    """Zeros of ``det Z(k)`` on ``[k_min, k_max]`` found independently of ``U``.

    Local minima of ``|det Z_s|`` (column-normalised) on a fine grid are
    polished by Newton's method on the holomorphic function ``det Z_s``,
    with the multiplicity taken from the SVD.
    """
    qg = qg.normalized()
    Ltot = max(qg.graph.total_length, 1e-300)
    h = np.pi / (4.0 * Ltot * safety) / 2
    grid = np.arange(k_min, k_max + h, h) + h * 0.2113
    E = qg.graph.E

    def zs(ks):
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        return _Blocks(qg, ks, edge_ends_batch(qg, ks, "plane_wave")).Zs

    def normalised(M):
        return M / np.linalg.norm(M, axis=-2, keepdims=True)

    Ms = normalised(zs(grid))
    smin = np.linalg.svd(Ms, compute_uv=False)[:, -1]
    cands = [i for i in range(1, len(grid) - 1) if smin[i] <= smin[i - 1] and smin[i] <= smin[i + 1]]
    roots = []
    for i in cands:
        a, b = grid[i - 1], grid[i + 1]
        res = optimize.minimize_scalar(lambda x: np.linalg.svd(normalised(zs([x])[0]), compute_uv=False)[-1],
                                       bounds=(a, b), method="bounded", options={"xatol": 1e-9})
        k0 = float(res.x)
        m, ratio = _svd_multiplicity(normalised(zs([k0])[0]))
        if ratio > 1e-5:
            continue
        m = max(m, 1)
        # Newton with multiplicity on f = det Z_s (holomorphic in k)
        k = complex(k0)
        for _ in range(40):
            dh = 1e-6 * max(1.0, abs(k))
            f0 = np.linalg.det(zs([k])[0])
            f1 = np.linalg.det(zs([k + dh])[0])
            fm = np.linalg.det(zs([k - dh])[0])
            df = (f1 - fm) / (2 * dh)
            if df == 0:
                break
            step = m * f0 / df
            k = k - step
            if abs(step) < tol * 1e-2:
                break
        kr = float(k.real)
        if k_min < kr <= k_max and (not roots or abs(kr - roots[-1][0]) > 1e-7):
            roots.append((kr, m))
    return _complete_clusters(qg, roots, h, k_min, k_max, tol)


def _det_z(qg: QuantumGraph, ks) -> np.ndarray:
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    return np.linalg.det(_Blocks(qg, ks, edge_ends_batch(qg, ks, "plane_wave")).Z)


def _winding(qg: QuantumGraph, centre: float, w: float, n: int = 128) -> int:
    """Zeros of ``det Z`` inside the square of half-width ``w`` around ``centre``."""
    t = (np.arange(4 * n) + 0.5) / n
    side, frac = np.floor(t).astype(int), t - np.floor(t)
    corners = np.array([centre - w - 1j * w, centre + w - 1j * w, centre + w + 1j * w, centre - w + 1j * w,
                        centre - w - 1j * w])
    z = corners[side] + frac * (corners[side + 1] - corners[side])
    f = _det_z(qg, z)
    ph = np.angle(np.concatenate([f, f[:1]]))
    return int(round(np.sum(_wrap_arr(np.diff(ph))) / (2 * np.pi)))


def _wrap_arr(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % (2 * np.pi) - np.pi


def _complete_clusters(qg: QuantumGraph, roots: list[tuple[float, int]], h: float, k_min: float, k_max: float,
                       tol: float) -> list[tuple[float, int]]:
    """Recover roots hidden next to a found one, by contour counting and deflated Newton."""
    out = list(roots)
    for r, _ in roots:
        w = min(h, r - k_min) * 0.999
        if w <= 0:
            continue
        near = [x for x, m in out for _ in range(m) if abs(x - r) < w]
        want = _winding(qg, r, w)
        starts = [r + w * f for f in (0.5, -0.5, 0.25, -0.25, 0.75, -0.75)]
        while want > len(near) and starts:
            k = complex(starts.pop(0))
            for _ in range(60):
                dh = 1e-7 * max(1.0, abs(k))
                vals = _det_z(qg, np.array([k, k + dh, k - dh]))
                defl = np.prod([(k - x) for x in near]) if near else 1.0
                defl_p = np.prod([(k + dh - x) for x in near]) if near else 1.0
                defl_m = np.prod([(k - dh - x) for x in near]) if near else 1.0
                g0, gp, gm = vals[0] / defl, vals[1] / defl_p, vals[2] / defl_m
                dg = (gp - gm) / (2 * dh)
                if dg == 0:
                    break
                step = g0 / dg
                k -= step
                if abs(step) < tol * 1e-2:
                    break
            kr = float(k.real)
            if abs(k.imag) < 1e-8 and abs(kr - r) < w and all(abs(kr - x) > 1e-9 for x in near) and k_min < kr <= k_max:
                near.append(kr)
                out.append((kr, 1))
    out.sort()
    return out


def zero_mode_multiplicity(qg: QuantumGraph, tol: float = 1e-9) -> int:
    """Dimension of the kernel of ``H`` on a compact graph."""
    qg = qg.normalized()
    g = qg.graph
    if not g.is_compact:
        return 0
    idx = g.index
    E = g.E
    X = np.zeros((E, E))
    Y = np.zeros((E, E))
    for e in g.internal_edges:
        i0, il = idx.slot(e.id, "0"), idx.slot(e.id, "l")
        (c, dc), (s, ds) = zero_energy_basis(qg.potentials[e.id])
        X[i0, i0], X[i0, il] = 1.0, 0.0
        X[il, i0], X[il, il] = c, s
        Y[i0, i0], Y[i0, il] = 0.0, 1.0
        Y[il, i0], Y[il, il] = -dc, -ds
    cond = qg.conditions
    Z = (cond.P + cond.L) @ X + cond.P_perp @ Y
    Z = Z / np.maximum(np.linalg.norm(Z, axis=0, keepdims=True), 1e-300)
    sv = np.linalg.svd(Z, compute_uv=False)
    return int(np.sum(sv < tol * sv[0]))


def _kappa_bound(qg: QuantumGraph) -> float:
    L = qg.conditions.L
    lmax = max(0.0, float(np.max(np.linalg.eigvalsh(0.5 * (L + L.conj().T))))) if L.size else 0.0
    lmin_len = min([e.length for e in qg.graph.internal_edges] + [np.inf])
    extra = math.sqrt(2 * lmax / lmin_len) if np.isfinite(lmin_len) else 0.0
    return math.sqrt(max(0.0, -qg.v_min)) + 2 * lmax + extra + 1.0


def find_negative_eigenvalues(qg: QuantumGraph, kappa_max: float | None = None, kappa_min: float = EPS0,
                              safety: float = 4.0, tol: float = 1e-10) -> list[Eigenvalue]:
    """Eigenvalues ``-kappa^2`` via zeros of ``det Z(i kappa)``."""
    qg = qg.normalized()
    kappa_max = kappa_max if kappa_max is not None else _kappa_bound(qg)
    Ltot = qg.graph.total_length
    h = min(0.05, np.pi / (4.0 * max(Ltot, 1.0) * safety))
    grid = np.arange(kappa_min, kappa_max + h, h)
    well = -qg.v_min
    if well > kappa_min**2:
        # inside a well the phase q = sqrt(-V - kappa^2) moves like kappa/q per unit
        # kappa; add points uniform in q so that fast stretches are resolved too
        q = np.arange(0.0, math.sqrt(well - kappa_min**2), h)
        extra = np.sqrt(well - q * q)
        grid = np.unique(np.concatenate([grid, extra[(extra > kappa_min) & (extra < kappa_max)]]))

    def zs(kappas):
        ks = 1j * np.atleast_1d(np.asarray(kappas, dtype=float))
        return _Blocks(qg, ks, edge_ends_batch(qg, ks, "decaying")).Zs

    def normalised(M):
        return M / np.maximum(np.linalg.norm(M, axis=-2, keepdims=True), 1e-300)

    def smin(x):
        return float(np.linalg.svd(normalised(zs([x])[0]), compute_uv=False)[-1])

    s = np.linalg.svd(normalised(zs(grid)), compute_uv=False)[:, -1]
    found = []
    for i in range(len(grid)):
        left = s[i - 1] if i > 0 else np.inf
        right = s[i + 1] if i + 1 < len(grid) else np.inf
        if not (s[i] <= left and s[i] <= right):
            continue
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(smin, bounds=(a, b), method="bounded", options={"xatol": 1e-13})
        kap = float(res.x)
        if kap - kappa_min < 1e-9:
            continue  # minimum pinned to the excluded window around k = 0
        # polish on the real-analytic determinant when it changes sign; the minimiser
        # can stall short of a kink-shaped minimum, so widen the bracket stepwise
        det = lambda x: np.linalg.det(normalised(zs([x])[0]))  # noqa: E731
        m, ratio = _svd_multiplicity(normalised(zs([kap])[0]))
        for w in (1e-6, 1e-5, 1e-4):
            lo, hi = max(kap - w, kappa_min), kap + w
            da, db = det(lo), det(hi)
            if abs(da.imag) < 1e-8 * abs(da) + 1e-300 and abs(db.imag) < 1e-8 * abs(db) + 1e-300 and da.real * db.real < 0:
                root = optimize.brentq(lambda x: det(x).real, lo, hi, xtol=tol * 1e-2)
                m2, r2 = _svd_multiplicity(normalised(zs([root])[0]))
                if r2 <= ratio or r2 <= 1e-6:
                    kap, m, ratio = root, m2, r2
                    break
        if ratio > 1e-6:
            continue
        if found and abs(found[-1].k.imag - kap) < 1e-7:
            continue
        found.append(Eigenvalue(-kap * kap, 1j * kap, max(m, 1), ratio))
    return sorted(found, key=lambda e: e.lam)


def find_eigenvalues(qg: QuantumGraph, lam_max: float, *, safety: float = 4.0, include_zero: bool = True,
                     negative: bool = True, kappa_max: float | None = None) -> SpectralResult:
    """All eigenvalues up to ``lam_max`` on a compact graph; negative ones on any graph."""
    qg = qg.normalized()
    g = qg.graph
    eigs: list[Eigenvalue] = []
    meta = {"lam_max": lam_max, "eps0": EPS0, "safety": safety, "grid_spacing": np.pi / (4 * max(g.total_length, 1e-300) * safety)}
    if negative:
        eigs += [e for e in find_negative_eigenvalues(qg, kappa_max, safety=safety) if e.lam <= lam_max]
    if g.is_compact:
        if include_zero and lam_max >= 0:
            m0 = zero_mode_multiplicity(qg)
            if m0:
                eigs.append(Eigenvalue(0.0, 0j, m0, 0.0))
        if lam_max > EPS0**2:
            k_max = math.sqrt(lam_max)
            for k, m, res in positive_roots_U(qg, k_max, safety=safety):
                eigs.append(Eigenvalue(k * k, complex(k), m, res))
            found = sum(e.multiplicity for e in eigs if e.lam > 0)
            weyl = g.total_length * k_max / np.pi
            meta["weyl_estimate"] = weyl
            if abs(found - weyl) > g.E + 2:
                meta["warning"] = f"Weyl count mismatch: found {found}, expected about {weyl:.1f}"
                log.warning(meta["warning"])
    else:
        meta["note"] = "non-compact graph: only negative eigenvalues are searched"
    eigs.sort(key=lambda e: e.lam)
    for e in eigs:
        if e.multiplicity > g.E:
            raise ArithmeticError(f"multiplicity {e.multiplicity} exceeds E={g.E}")
    return SpectralResult(eigs, meta)


# ----------------------------------------------------------------------------
# eigenfunctions


@dataclass
class Eigenfunction:
    """Edgewise eigenfunction ``psi_e = alpha u_+ + beta u_-`` (``gamma e^{ikx}`` outside)."""

    qg: QuantumGraph
    k: complex
    pairs: dict[str, FundamentalPair]
    coeffs: np.ndarray  # (gamma, alpha, beta) in slot order
    bc_residual: float = float("nan")

    def __call__(self, edge: str, x, deriv: bool = False):
        g = self.qg.graph
        idx = g.index
        x = np.asarray(x, dtype=float)
        e = g.edge(edge)
        if e.id in self.pairs:
            p = self.pairs[e.id]
            a, b = self.coeffs[idx.slot(e.id, "0")], self.coeffs[idx.slot(e.id, "l")]
            f = p.du if deriv else p.u
            return a * f(1, x) + b * f(-1, x)
        gam = self.coeffs[idx.slot(e.id, "ext")]
        base = gam * np.exp(1j * self.k * x)
        return 1j * self.k * base if deriv else base

    def boundary_data(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.qg.graph
        vals = np.zeros(g.E, dtype=complex)
        ders = np.zeros(g.E, dtype=complex)
        for i, s in enumerate(g.index.slots):
            if s.end == "l":
                l = g.edge(s.edge).length
                vals[i] = self(s.edge, l)
                ders[i] = -self(s.edge, l, deriv=True)
            else:
                vals[i] = self(s.edge, 0.0)
                ders[i] = self(s.edge, 0.0, deriv=True)
        return vals, ders

    def norm2(self) -> float:
        total = 0.0
        for eid, p in self.pairs.items():
            x, w = p.gauss_points
            total += float(np.sum(w * np.abs(self(eid, x)) ** 2))
        for e in self.qg.graph.external_edges:
            gam = self.coeffs[self.qg.graph.index.slot(e.id, "ext")]
            if abs(gam) > 0:
                total += abs(gam) ** 2 / (2 * self.k.imag) if self.k.imag > 0 else np.inf
        return total


def eigenfunctions(qg: QuantumGraph, k: complex, multiplicity: int | None = None) -> list[Eigenfunction]:
    """Null space of ``Z(k)`` mapped to normalised eigenfunctions."""
    qg = qg.normalized()
    m = assemble(qg, k)
    Zs = m.Z_scaled
    colnorm = np.maximum(np.linalg.norm(Zs, axis=0), 1e-300)
    _, s, vh = np.linalg.svd(Zs / colnorm)
    if multiplicity is None:
        multiplicity = max(1, int(np.sum(s < SVD_THRESHOLD * s[0])))
    b = m.blocks
    out = []
    for j in range(1, multiplicity + 1):
        c = vh[-j].conj() / colnorm
        c = c.astype(complex)
        c[b.il] = c[b.il] * b.um_l_inv[0]  # back from the scaled basis
        f = Eigenfunction(qg, complex(k), m.pairs, c)
        nrm = math.sqrt(f.norm2())
        f.coeffs = c / nrm
        # fix a global phase so that real-valued states come out real
        vals, ders = f.boundary_data()
        big = np.concatenate([vals, ders])
        ph = big[np.argmax(np.abs(big))]
        f.coeffs = f.coeffs * (abs(ph) / ph if abs(ph) > 0 else 1.0)
        vals, ders = f.boundary_data()
        cond = qg.conditions
        resid = np.linalg.norm((cond.P + cond.L) @ vals + cond.P_perp @ ders)
        f.bc_residual = float(resid / max(np.linalg.norm(vals) + np.linalg.norm(ders), 1e-300))
        out.append(f)
    return out
