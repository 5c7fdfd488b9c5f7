"""Metric graphs, edge-end indexing and the graph metric."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path

__all__ = [
    "GraphError",
    "InternalEdge",
    "ExternalEdge",
    "EdgeEnd",
    "MetricGraph",
    "BoundaryIndex",
    "GraphPoint",
    "build_graph",
    "graph_distance",
    "id_key",
]


class GraphError(ValueError):
    """Invalid graph description."""


_CHUNK = re.compile(r"(\d+)")


def id_key(name: str) -> tuple:
    """Natural sort key: ``e2 < e10``; numeric ids sort numerically."""
    parts = _CHUNK.split(str(name))
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in parts if p != "")


@dataclass(frozen=True)
class InternalEdge:
    id: str
    start: str
    end: str
    length: float

    @property
    def is_tadpole(self) -> bool:
        return self.start == self.end


@dataclass(frozen=True)
class ExternalEdge:
    id: str
    vertex: str


@dataclass(frozen=True)
class EdgeEnd:
    """One boundary slot: ``end`` is ``"ext"``, ``"0"`` or ``"l"``."""

    edge: str
    end: str
    vertex: str


@dataclass(frozen=True)
class GraphPoint:
    edge: str
    x: float


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[str, ...]
    internal_edges: tuple[InternalEdge, ...]
    external_edges: tuple[ExternalEdge, ...]

    @property
    def E_int(self) -> int:
        return len(self.internal_edges)

    @property
    def E_ex(self) -> int:
        return len(self.external_edges)

    @property
    def E(self) -> int:
        return self.E_ex + 2 * self.E_int

    @property
    def total_length(self) -> float:
        return math.fsum(e.length for e in self.internal_edges)

    @property
    def is_compact(self) -> bool:
        return self.E_ex == 0

    @property
    def tadpoles(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.internal_edges if e.is_tadpole)

    @property
    def needs_normalisation(self) -> bool:
        return bool(self.tadpoles)

    @cached_property
    def index(self) -> "BoundaryIndex":
        return BoundaryIndex(self)

    @cached_property
    def _edges(self) -> dict:
        out = {e.id: e for e in self.internal_edges}
        out.update({e.id: e for e in self.external_edges})
        return out

    def edge(self, edge_id) -> InternalEdge | ExternalEdge:
        try:
            return self._edges[str(edge_id)]
        except KeyError:
            raise GraphError(f"unknown edge {edge_id!r}") from None

    def internal(self, edge_id) -> InternalEdge:
        e = self.edge(edge_id)
        if not isinstance(e, InternalEdge):
            raise GraphError(f"edge {edge_id!r} is external")
        return e

    def degree(self, vertex: str) -> int:
        return len(self.index.vertex_slots(vertex))

    @cached_property
    def _vertex_distances(self) -> np.ndarray:
        pos = {v: i for i, v in enumerate(self.vertices)}
        n = len(self.vertices)
        w = np.full((n, n), np.inf)
        np.fill_diagonal(w, 0.0)
        for e in self.internal_edges:
            i, j = pos[e.start], pos[e.end]
            if i != j and e.length < w[i, j]:
                w[i, j] = w[j, i] = e.length
        dense = np.where(np.isfinite(w), w, 0.0)
        return shortest_path(dense, method="D", directed=False)

    def vertex_distance(self, u: str, v: str) -> float:
        pos = {name: i for i, name in enumerate(self.vertices)}
        return float(self._vertex_distances[pos[u], pos[v]])


class BoundaryIndex:
    """Slot layout: external ends, then internal ``x=0`` ends, then ``x=l`` ends.

    Each group is in ascending edge id order.
    """

    def __init__(self, graph: MetricGraph):
        slots = [EdgeEnd(e.id, "ext", e.vertex) for e in graph.external_edges]
        slots += [EdgeEnd(e.id, "0", e.start) for e in graph.internal_edges]
        slots += [EdgeEnd(e.id, "l", e.end) for e in graph.internal_edges]
        self.slots: tuple[EdgeEnd, ...] = tuple(slots)
        self._pos = {(s.edge, s.end): i for i, s in enumerate(self.slots)}
        self.n_ext = graph.E_ex
        self.n_int = graph.E_int
        self._by_vertex: dict[str, list[int]] = {v: [] for v in graph.vertices}
        for i, s in enumerate(self.slots):
            self._by_vertex[s.vertex].append(i)

    def __len__(self) -> int:
        return len(self.slots)

    def slot(self, edge: str, end: str) -> int:
        return self._pos[(str(edge), end)]

    def vertex_slots(self, vertex: str) -> list[int]:
        return list(self._by_vertex[vertex])

    @property
    def ext(self) -> slice:
        return slice(0, self.n_ext)

    @property
    def start(self) -> slice:
        return slice(self.n_ext, self.n_ext + self.n_int)

    @property
    def stop(self) -> slice:
        return slice(self.n_ext + self.n_int, self.n_ext + 2 * self.n_int)


def _as_items(obj, key: str) -> list:
    items = obj.get(key, []) if isinstance(obj, Mapping) else []
    if not isinstance(items, list):
        raise GraphError(f"'{key}' must be a list")
    return items


def build_graph(description: Mapping) -> MetricGraph:
    """Validate a graph description and return a :class:`MetricGraph`.

    ``description`` has ``vertices``, ``internal_edges`` (``id``, ``from``,
    ``to``, ``length``) and ``external_edges`` (``id``, ``at``).
    """
    if not isinstance(description, Mapping):
        raise GraphError("graph description must be a mapping")
    raw_vertices = description.get("vertices")
    if not isinstance(raw_vertices, list) or not raw_vertices:
        raise GraphError("'vertices' must be a non-empty list")
    vertices = [str(v) for v in raw_vertices]
    if len(set(vertices)) != len(vertices):
        raise GraphError("duplicate vertex ids")
    vset = set(vertices)

    seen: set[str] = set()

    def new_id(item, where):
        if not isinstance(item, Mapping) or "id" not in item:
            raise GraphError(f"{where}: every edge needs an 'id'")
        eid = str(item["id"])
        if eid in seen:
            raise GraphError(f"{where}: duplicate edge id {eid!r}")
        seen.add(eid)
        return eid

    def vertex_ref(item, key, eid):
        if key not in item:
            raise GraphError(f"edge {eid!r}: missing '{key}'")
        v = str(item[key])
        if v not in vset:
            raise GraphError(f"edge {eid!r}: dangling reference to vertex {v!r}")
        return v

    internal = []
    for n, item in enumerate(_as_items(description, "internal_edges")):
        eid = new_id(item, f"internal_edges[{n}]")
        try:
            length = float(item["length"])
        except (KeyError, TypeError, ValueError):
            raise GraphError(f"edge {eid!r}: missing or non-numeric 'length'") from None
        if not (math.isfinite(length) and length > 0):
            raise GraphError(f"edge {eid!r}: length must be positive and finite, got {length}")
        internal.append(InternalEdge(eid, vertex_ref(item, "from", eid), vertex_ref(item, "to", eid), length))
    external = []
    for n, item in enumerate(_as_items(description, "external_edges")):
        eid = new_id(item, f"external_edges[{n}]")
        external.append(ExternalEdge(eid, vertex_ref(item, "at", eid)))
    return make_graph(vertices, internal, external)


def make_graph(vertices: Iterable[str], internal: Iterable[InternalEdge], external: Iterable[ExternalEdge]) -> MetricGraph:
    vertices = tuple(str(v) for v in vertices)
    internal = tuple(sorted(internal, key=lambda e: id_key(e.id)))
    external = tuple(sorted(external, key=lambda e: id_key(e.id)))
    if not internal and not external:
        raise GraphError("graph has no edges")
    g = MetricGraph(vertices, internal, external)
    pos = {v: i for i, v in enumerate(vertices)}
    used = {e.vertex for e in external} | {e.start for e in internal} | {e.end for e in internal}
    isolated = [v for v in vertices if v not in used]
    if isolated:
        raise GraphError(f"graph is disconnected: isolated vertices {isolated}")
    n = len(vertices)
    adj = np.zeros((n, n))
    for e in internal:
        adj[pos[e.start], pos[e.end]] = adj[pos[e.end], pos[e.start]] = 1
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise GraphError(f"graph is disconnected ({ncomp} components)")
    return g


def _anchors(g: MetricGraph, p: GraphPoint) -> list[tuple[str, float]]:
    e = g.edge(p.edge)
    x = float(p.x)
    if isinstance(e, ExternalEdge):
        if not (x >= 0 and math.isfinite(x)):
            raise GraphError(f"coordinate {x} outside [0, inf) on edge {e.id!r}")
        return [(e.vertex, x)]
    if not (-1e-12 <= x <= e.length * (1 + 1e-12)):
        raise GraphError(f"coordinate {x} outside [0, {e.length}] on edge {e.id!r}")
    return [(e.start, x), (e.end, e.length - x)]


def graph_distance(g: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    """Length of the shortest path between two points of the graph."""
    best = math.inf
    if str(p.edge) == str(q.edge):
        best = abs(float(p.x) - float(q.x))
    for u, du in _anchors(g, p):
        for w, dw in _anchors(g, q):
            best = min(best, du + g.vertex_distance(u, w) + dw)
    return best
