"""A quantum graph: metric graph, vertex conditions and edge potentials."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping

import numpy as np

from .conditions import ConditionsError, Custom, Delta, Kind, VertexConditions, standard_conditions
from .graph import ExternalEdge, GraphError, InternalEdge, MetricGraph, build_graph, make_graph
from .potential import EdgePotential, as_fraction

__all__ = [
    "QuantumGraph",
    "ExternalPotential",
    "normalize_graph",
    "load_quantum_graph",
    "parse_quantum_graph",
]

MARGIN = 1.0


@dataclass(frozen=True)
class ExternalPotential:
    """Polynomial potential on ``[0, support]`` of an external edge, zero beyond."""

    potential: EdgePotential
    support: float


def normalize_graph(graph: MetricGraph, potentials: Mapping[str, EdgePotential],
                    external: Mapping[str, ExternalPotential] | None = None,
                    ) -> tuple[MetricGraph, dict[str, EdgePotential], list[str], set[str]]:
    """Split tadpoles at their midpoint and move external potentials inside.

    Returns the new graph, its internal potentials, the inserted vertices
    (all to carry Kirchhoff conditions) and the original vertices whose
    edge-end layout changed.
    """
    external = dict(external or {})
    vertices = list(graph.vertices)
    internal: list[InternalEdge] = []
    ext_edges: list[ExternalEdge] = []
    pots: dict[str, EdgePotential] = {}
    inserted: list[str] = []
    touched: set[str] = set()
    taken = {e.id for e in graph.internal_edges} | {e.id for e in graph.external_edges} | set(vertices)

    def fresh(base: str) -> str:
        name, n = base, 1
        while name in taken:
            n += 1
            name = f"{base}{n}"
        taken.add(name)
        return name

    for e in graph.internal_edges:
        V = potentials.get(e.id, EdgePotential.zero())
        if not e.is_tadpole:
            internal.append(e)
            pots[e.id] = V.with_length(e.length)
            continue
        half = e.length / 2
        mid = fresh(f"{e.id}/mid")
        a, b = fresh(f"{e.id}/1"), fresh(f"{e.id}/2")
        vertices.append(mid)
        inserted.append(mid)
        touched.add(e.start)
        internal.append(InternalEdge(a, e.start, mid, half))
        internal.append(InternalEdge(b, mid, e.end, half))
        pots[a] = V.with_length(half)
        pots[b] = V.shifted(Fraction(half)).with_length(half)

    for e in graph.external_edges:
        xp = external.get(e.id)
        if xp is None or xp.potential.is_zero:
            ext_edges.append(e)
            continue
        if not (np.isfinite(xp.support) and xp.support > 0):
            raise GraphError(f"external edge {e.id!r}: potential needs a positive compact support")
        core, margin = fresh(f"{e.id}/core"), fresh(f"{e.id}/margin")
        va, vb = fresh(f"{e.id}/a"), fresh(f"{e.id}/b")
        vertices += [va, vb]
        inserted += [va, vb]
        touched.add(e.vertex)
        internal.append(InternalEdge(core, e.vertex, va, float(xp.support)))
        internal.append(InternalEdge(margin, va, vb, MARGIN))
        ext_edges.append(ExternalEdge(e.id, vb))
        pots[core] = xp.potential.with_length(float(xp.support))
        pots[margin] = EdgePotential.zero(MARGIN)

    new = make_graph(vertices, internal, ext_edges)
    return new, pots, inserted, touched


@dataclass(frozen=True)
class QuantumGraph:
    """Schrodinger operator ``-psi'' + V psi`` on a metric graph."""

    graph: MetricGraph
    conditions: VertexConditions
    potentials: Mapping[str, EdgePotential] = field(default_factory=dict)
    external_potentials: Mapping[str, ExternalPotential] = field(default_factory=dict)

    def __post_init__(self):
        g = self.graph
        if self.conditions.size != g.E:
            raise ConditionsError(f"conditions have size {self.conditions.size}, graph has E={g.E}")
        pots = {}
        for e in g.internal_edges:
            V = self.potentials.get(e.id, EdgePotential.zero())
            pots[e.id] = V.with_length(e.length)
        extra = set(self.potentials) - set(pots)
        if extra:
            raise GraphError(f"potentials given for unknown internal edges {sorted(extra)}")
        object.__setattr__(self, "potentials", pots)
        bad = set(self.external_potentials) - {e.id for e in g.external_edges}
        if bad:
            raise GraphError(f"external potentials for unknown edges {sorted(bad)}")

    @classmethod
    def build(cls, graph: MetricGraph, kinds: Mapping[str, Kind] | None = None,
              potentials: Mapping[str, EdgePotential | list] | None = None, default: Kind = "kirchhoff",
              external_potentials: Mapping[str, ExternalPotential] | None = None) -> "QuantumGraph":
        pots = {str(k): (v if isinstance(v, EdgePotential) else EdgePotential(v)) for k, v in (potentials or {}).items()}
        cond = standard_conditions(graph, kinds, default=default)
        return cls(graph, cond, pots, dict(external_potentials or {}))

    @property
    def is_normalized(self) -> bool:
        return not self.graph.tadpoles and not any(
            not p.potential.is_zero for p in self.external_potentials.values())

    def normalized(self) -> "QuantumGraph":
        """Equivalent graph without tadpoles or external potentials."""
        if self.is_normalized:
            return self
        if not self.conditions.local:
            raise ConditionsError("normalisation requires local vertex conditions")
        new, pots, inserted, touched = normalize_graph(self.graph, self.potentials, self.external_potentials)
        kinds = dict(self.conditions.kinds)
        for v in touched:
            if isinstance(kinds[v], Custom):
                raise ConditionsError(
                    f"vertex {v!r}: custom conditions at a vertex whose edge ends are rearranged by "
                    "normalisation are not supported; use a symmetric kind")
        for v in inserted:
            kinds[v] = "kirchhoff"
        return QuantumGraph(new, standard_conditions(new, kinds), pots, {})

    def potential(self, edge_id: str) -> EdgePotential:
        e = self.graph.edge(edge_id)
        if isinstance(e, ExternalEdge):
            xp = self.external_potentials.get(e.id)
            if xp is not None and not xp.potential.is_zero:
                raise GraphError("graph must be normalised before using external potentials")
            return EdgePotential.zero()
        return self.potentials[e.id]

    @cached_property
    def has_potential(self) -> bool:
        return any(not V.is_zero for V in self.potentials.values())

    @cached_property
    def v_min(self) -> float:
        vals = [V.minimum() for V in self.potentials.values()]
        if self.graph.E_ex:
            vals.append(0.0)
        return min(vals) if vals else 0.0

    @cached_property
    def v_max_abs(self) -> float:
        return max([V.sup_abs() for V in self.potentials.values()] + [0.0])


def _matrix(raw, where: str) -> np.ndarray:
    def entry(z):
        if isinstance(z, (list, tuple)):
            if len(z) != 2:
                raise GraphError(f"{where}: complex entries must be [re, im] pairs")
            return complex(float(z[0]), float(z[1]))
        return complex(float(z))
    try:
        rows = [[entry(z) for z in row] for row in raw]
    except (TypeError, ValueError) as exc:
        raise GraphError(f"{where}: malformed matrix ({exc})") from None
    if not rows or any(len(r) != len(rows) for r in rows):
        raise GraphError(f"{where}: matrix must be square and non-empty")
    return np.array(rows, dtype=complex)


def _kind(raw, vertex: str) -> Kind:
    where = f"conditions[{vertex!r}]"
    if isinstance(raw, (Delta, Custom)):
        return raw
    if isinstance(raw, str):
        if raw.lower() not in ("kirchhoff", "dirichlet", "neumann"):
            raise GraphError(f"{where}: unknown kind {raw!r}")
        return raw.lower()
    if isinstance(raw, Mapping):
        if "delta" in raw:
            return Delta(float(raw["delta"]))
        if "P" in raw and "L" in raw:
            return Custom(_matrix(raw["P"], where + ".P"), _matrix(raw["L"], where + ".L"))
    raise GraphError(f"{where}: expected 'kirchhoff', 'dirichlet', 'neumann', {{'P','L'}} or {{'delta'}}")


def _coeffs(raw, where: str) -> EdgePotential:
    if raw is None:
        return EdgePotential.zero()
    if not isinstance(raw, list):
        raise GraphError(f"{where}: potential must be a list of coefficients")
    try:
        return EdgePotential([as_fraction(c) for c in raw])
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise GraphError(f"{where}: bad coefficient ({exc})") from None


def parse_quantum_graph(doc: Mapping) -> QuantumGraph:
    """Build a :class:`QuantumGraph` from a decoded JSON description."""
    g = build_graph(doc)
    pots = {}
    for n, item in enumerate(doc.get("internal_edges", [])):
        pots[str(item["id"])] = _coeffs(item.get("potential"), f"internal_edges[{n}].potential")
    ext = {}
    for n, item in enumerate(doc.get("external_edges", [])):
        if item.get("potential") is None:
            continue
        V = _coeffs(item["potential"], f"external_edges[{n}].potential")
        if V.is_zero:
            continue
        if "support" not in item:
            raise GraphError(f"external edge {item['id']!r}: potential without declared compact 'support'")
        ext[str(item["id"])] = ExternalPotential(V, float(item["support"]))
    raw_cond = doc.get("conditions", {}) or {}
    if not isinstance(raw_cond, Mapping):
        raise GraphError("'conditions' must map vertex ids to kinds")
    kinds = {str(v): _kind(c, str(v)) for v, c in raw_cond.items()}
    return QuantumGraph.build(g, kinds, pots, external_potentials=ext)


def load_quantum_graph(path: str | os.PathLike) -> QuantumGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_quantum_graph(doc)
