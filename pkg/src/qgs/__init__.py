"""Spectral computations for Schrodinger operators on metric graphs."""

from .conditions import Custom, Delta, VertexConditions, standard_conditions
from .graph import GraphPoint, MetricGraph, build_graph, graph_distance
from .potential import EdgePotential
from .problem import QuantumGraph, load_quantum_graph, normalize_graph, parse_quantum_graph

__version__ = "0.1.0"

__all__ = [
    "Custom",
    "Delta",
    "EdgePotential",
    "GraphPoint",
    "MetricGraph",
    "QuantumGraph",
    "VertexConditions",
    "build_graph",
    "graph_distance",
    "load_quantum_graph",
    "normalize_graph",
    "parse_quantum_graph",
    "standard_conditions",
]
