"""Shared graphs and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import pytest

from qgs import QuantumGraph, build_graph, parse_quantum_graph

ACCEPTANCE_LINES: dict[int, str] = {}

X1MX = [0, 1, -1]  # x (1 - x)


def interval(kind: str = "dirichlet", V=None, length: float = 1.0) -> QuantumGraph:
    g = build_graph({"vertices": ["a", "b"],
                     "internal_edges": [{"id": "e", "from": "a", "to": "b", "length": length}]})
    return QuantumGraph.build(g, {"a": kind, "b": kind}, {"e": V} if V is not None else None)


def compact_star(V=None, lengths=(1.0, 1.25, 0.75), centre="kirchhoff") -> QuantumGraph:
    doc = {"vertices": ["c", "p", "q", "r"],
           "internal_edges": [{"id": str(i + 1), "from": "c", "to": v, "length": l}
                              for i, (v, l) in enumerate(zip("pqr", lengths))],
           "conditions": {"c": centre, "p": "dirichlet", "q": "dirichlet", "r": "dirichlet"}}
    if V is not None:
        for item in doc["internal_edges"]:
            item["potential"] = list(V)
    return parse_quantum_graph(doc)


def lasso(V=None, centre="kirchhoff") -> QuantumGraph:
    doc = {"vertices": ["a", "b"],
           "internal_edges": [{"id": "loop", "from": "a", "to": "a", "length": 2.0},
                              {"id": "stick", "from": "a", "to": "b", "length": 1.0}],
           "conditions": {"a": centre, "b": "dirichlet"}}
    if V is not None:
        for item in doc["internal_edges"]:
            item["potential"] = list(V)
    return parse_quantum_graph(doc).normalized()


def open_star(n: int = 3, centre="kirchhoff") -> QuantumGraph:
    return parse_quantum_graph({"vertices": ["c"],
                                "external_edges": [{"id": str(i + 1), "at": "c"} for i in range(n)],
                                "conditions": {"c": centre}})


@pytest.fixture
def record_acceptance():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
