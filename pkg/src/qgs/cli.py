"""Command-line interface: ``qgs <command> --graph FILE [options]``.

Exit status is 0 on success, 1 when a numerical test fails and 2 for invalid
input.  Machine formats (json, csv) print 17 significant digits, the text
format prints 6.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import sympy as sp

from . import __version__
from .asymptotics import heat_coeffs, resolvent_trace_coeffs, smatrix_series
from .conditions import ConditionsError, check_conditions
from .graph import GraphError
from .heat import (ResidualTable, heat_trace, parse_grid, resolvent_asymptotic_check, residual_study,
                   smatrix_asymptotic_check)
from .parallel import thread_count
from .problem import QuantumGraph, load_quantum_graph
from .resolvent import NearSpectrumError, regularized_trace
from .secular import ExcludedRegionError, find_eigenvalues, find_negative_eigenvalues

log = logging.getLogger("qgs")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2
ORACLE_RTOL = 1e-6

DEFAULTS = {
    "lambda_max": 200.0,
    "kappa_grid": "8:64:4",
    "t_grid": "0.015625:0.001953125:4",
    "k_grid": "20:320:5",
    "order": 2,
}


class InputError(Exception):
    """Invalid user input; maps to exit status 2."""


@dataclass
class Report:
    """A table plus scalar summary, rendered deterministically."""

    command: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    status: int = EXIT_OK


def _fmt(x: Any, digits: int) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, f".{digits}g")
    if isinstance(x, (complex, np.complexfloating)):
        z = complex(x)
        return f"{_fmt(z.real, digits)}{'+' if z.imag >= 0 or math.isnan(z.imag) else '-'}{_fmt(abs(z.imag), digits)}i"
    return str(x)


def _json_value(x: Any):
    """JSON-safe value; floats go through ``.17g`` so output is byte-stable."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_json_value(complex(x).real), _json_value(complex(x).imag)]
    if isinstance(x, dict):
        return {str(k): _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    return str(x)


def _dump(v, level: int = 0) -> str:
    """Minimal JSON writer printing floats with ``.17g``."""
    pad, inner = "  " * level, "  " * (level + 1)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_dump(w, level + 1)}" for k, w in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, list):
        if all(not isinstance(w, (list, dict)) for w in v):
            return "[" + ", ".join(_dump(w, level + 1) for w in v) + "]"
        return "[\n" + ",\n".join(inner + _dump(w, level + 1) for w in v) + "\n" + pad + "]"
    raise TypeError(type(v))


def render(report: Report, fmt: str) -> str:
    if fmt == "json":
        doc = {"command": report.command, "columns": report.columns,
               "rows": [_json_value(r) for r in report.rows], "summary": _json_value(report.summary)}
        return _dump(doc) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = []
        complex_cols = {j for j, _ in enumerate(report.columns)
                        if any(isinstance(r[j], (complex, np.complexfloating)) for r in report.rows)}
        for j, c in enumerate(report.columns):
            header += [f"{c}_re", f"{c}_im"] if j in complex_cols else [c]
        w.writerow(header)
        for r in report.rows:
            out = []
            for j, x in enumerate(r):
                if j in complex_cols:
                    z = complex(x)
                    out += [_fmt(z.real, 17), _fmt(z.imag, 17)]
                else:
                    out.append(_fmt(x, 17))
            w.writerow(out)
        for k, v in report.summary.items():
            w.writerow([f"# {k}", _fmt(v, 17) if not isinstance(v, (dict, list)) else json.dumps(_json_value(v))])
        return buf.getvalue()
    cells = [[_fmt(x, 6) for x in r] for r in report.rows]
    widths = [max([len(c)] + [len(row[j]) for row in cells]) for j, c in enumerate(report.columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(report.columns, widths))]
    lines += ["  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells]
    for k, v in report.summary.items():
        lines.append(f"{k}: {_fmt(v, 6) if not isinstance(v, (dict, list)) else json.dumps(_json_value(v))}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# commands


def _load(args) -> QuantumGraph:
    if not args.graph:
        raise InputError("--graph PATH is required")
    path = Path(args.graph)
    if not path.is_file():
        raise InputError(f"graph file not found: {path}")
    qg = load_quantum_graph(path)
    if not qg.is_normalized:
        if not args.normalize:
            raise InputError("graph has tadpoles or external potentials; rerun with --normalize")
        qg = qg.normalized()
    return qg


def _grid(text: str | None, default: str, name: str) -> np.ndarray:
    try:
        return parse_grid(text or default)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from None


def _kinds(args) -> list[str]:
    if args.regularization:
        return [args.regularization.upper()]
    return ["N"]


def cmd_validate(args) -> Report:
    if not args.graph:
        raise InputError("--graph PATH is required")
    qg = load_quantum_graph(args.graph)
    g = qg.graph
    rep = Report("validate", ["check", "result"])
    notes = []
    if not qg.is_normalized:
        msg = "graph has tadpoles or external potentials; normalisation needed (pass --normalize)"
        log.warning(msg)
        notes.append(msg)
        if args.normalize:
            qg = qg.normalized()
    problems = check_conditions(qg.conditions.P, qg.conditions.L)
    rep.rows += [["vertices", len(qg.graph.vertices)], ["internal_edges", qg.graph.E_int],
                 ["external_edges", qg.graph.E_ex], ["total_length", float(qg.graph.total_length)],
                 ["compact", qg.graph.is_compact], ["normalized", qg.is_normalized],
                 ["conditions", "ok" if not problems else "; ".join(problems)]]
    if notes:
        rep.summary["warning"] = notes[0]
    rep.summary["original_E"] = g.E
    if problems:
        raise InputError("vertex conditions invalid: " + "; ".join(problems))
    return rep


def _read_oracle(path: str) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        if isinstance(doc, dict):
            doc = doc.get("eigenvalues", doc.get("rows"))
        vals = [float(r[0] if isinstance(r, list) else r) for r in doc]
    except (json.JSONDecodeError, TypeError, ValueError):
        vals = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            head = line.replace(",", " ").split()[0]
            try:
                vals.append(float(head))
            except ValueError:
                continue  # header line
    if not vals:
        raise InputError(f"oracle file {path} holds no eigenvalues")
    return np.sort(np.array(vals))


def cmd_spectrum(args) -> Report:
    qg = _load(args)
    lam_max = args.lambda_max if args.lambda_max is not None else DEFAULTS["lambda_max"]
    if not qg.graph.is_compact and not args.negative_only:
        raise InputError("graph is non-compact: its positive spectrum is continuous; "
                         "use --negative-only to list the eigenvalues below zero")
    if args.negative_only:
        eigs = [e for e in find_negative_eigenvalues(qg) if e.lam <= lam_max]
        meta = {"negative_only": True}
    else:
        spec = find_eigenvalues(qg, lam_max)
        eigs, meta = spec.eigenvalues, spec.meta
    rep = Report("spectrum", ["lambda", "k", "multiplicity", "residual"])
    for e in eigs:
        rep.rows.append([float(e.lam), complex(e.k) if complex(e.k).imag else float(complex(e.k).real),
                         int(e.multiplicity), float(e.residual)])
    rep.summary["count"] = sum(e.multiplicity for e in eigs)
    rep.summary["lambda_max"] = float(lam_max)
    if "warning" in meta:
        rep.summary["warning"] = meta["warning"]
    if args.oracle:
        ref = _read_oracle(args.oracle)
        ref = ref[ref <= lam_max]
        ours = np.sort(np.array([e.lam for e in eigs for _ in range(e.multiplicity)]))
        ok = ref.size == ours.size
        err = float(np.max(np.abs(ours - ref) / np.maximum(np.abs(ref), 1.0))) if ok and ref.size else (0.0 if ok else math.inf)
        ok = ok and err <= ORACLE_RTOL
        rep.summary.update({"oracle_count": int(ref.size), "oracle_max_rel_error": err, "oracle_pass": ok})
        if not ok:
            rep.status = EXIT_NUMERIC
    return rep


def _mat_rows(name: str, M: np.ndarray) -> list[list[Any]]:
    return [[name, i, j, complex(M[i, j])] for i in range(M.shape[0]) for j in range(M.shape[1])]


def cmd_smatrix(args) -> Report:
    qg = _load(args)
    order = args.order if args.order is not None else 3
    if not 0 <= order <= 6:
        raise InputError("--order must be between 0 and 6 for smatrix")
    series = smatrix_series(qg, order) if order else [smatrix_series(qg, 1)[0]]
    rep = Report("smatrix", ["term", "row", "col", "value"])
    for m, M in enumerate(series):
        rep.rows += _mat_rows("S_inf" if m == 0 else f"S_{m}", np.array(sp.N(M, 20), dtype=complex))
    rep.summary["slots"] = [f"{s.edge}:{s.end}" for s in qg.graph.index.slots]
    return rep


def cmd_resolvent_trace(args) -> Report:
    qg = _load(args)
    kappas = _grid(args.kappa_grid, DEFAULTS["kappa_grid"], "--kappa-grid")
    rep = Report("resolvent-trace", ["kappa", "regularization", "trace"])
    for kind in _kinds(args):
        for kap in kappas:
            rep.rows.append([float(kap), kind, complex(regularized_trace(qg, 1j * kap, kind))])
    return rep


def cmd_heat_trace(args) -> Report:
    qg = _load(args)
    if not qg.graph.is_compact:
        raise InputError("numeric heat traces need a compact graph; use resolvent-residuals for non-compact graphs")
    ts = _grid(args.t_grid, DEFAULTS["t_grid"], "--t-grid")
    rep = Report("heat-trace", ["t", "value", "tail_bound", "eigenvalues"])
    for s in heat_trace(qg, np.sort(ts)):
        rep.rows.append([s.t, s.value, s.tail_bound, s.n_eigenvalues])
    return rep


def cmd_coefficients(args) -> Report:
    qg = _load(args)
    kinds = ["D", "N"] if qg.graph.E_ex else ["N"]
    if args.regularization:
        kinds = [args.regularization.upper()]
    rep = Report("coefficients", ["name", "regularization", "exact", "value"])
    for kind in kinds:
        b = resolvent_trace_coeffs(qg, kind)
        a = heat_coeffs(b)
        for n, x in enumerate(b.b, start=1):
            rep.rows.append([f"b{n}", kind, str(x), complex(sp.N(x, 30))])
        for n, x in enumerate(a.a, start=1):
            label = "a3 (with 1/sqrt(pi))" if n == 3 else f"a{n}"
            rep.rows.append([label, kind, str(x), complex(sp.N(x, 30))])
        rep.rows.append(["a3 (without 1/sqrt(pi))", kind, str(a.a3_alt), complex(sp.N(a.a3_alt, 30))])
    return rep


def _residual_report(name: str, table: ResidualTable) -> Report:
    rep = Report(name, table.columns())
    for row in table.rows:
        rep.rows.append(list(row))
    rep.summary.update({"order": table.order, "fitted_slope": table.slope, "required_slope": table.target,
                        "pass": table.passed})
    if table.note:
        rep.summary["note"] = table.note
    for k, v in table.meta.items():
        rep.summary[k] = v
    rep.status = EXIT_OK if table.passed else EXIT_NUMERIC
    return rep


def _order(args, lo=1, hi=5) -> int:
    N = args.order if args.order is not None else DEFAULTS["order"]
    if not lo <= N <= hi:
        raise InputError(f"--order must be between {lo} and {hi}")
    return N


def cmd_heat_residuals(args) -> Report:
    qg = _load(args)
    if not qg.graph.is_compact:
        raise InputError("heat residuals need a compact graph; use resolvent-residuals instead")
    N = _order(args)
    ts = _grid(args.t_grid, DEFAULTS["t_grid"], "--t-grid")
    table = residual_study(qg, ts, N, kind="N", a3_variant=args.a3)
    return _residual_report("heat-residuals", table)


def cmd_resolvent_residuals(args) -> Report:
    qg = _load(args)
    N = _order(args)
    kappas = _grid(args.kappa_grid, DEFAULTS["kappa_grid"], "--kappa-grid")
    kind = _kinds(args)[0]
    return _residual_report("resolvent-residuals", resolvent_asymptotic_check(qg, kappas, N, kind))


def cmd_wkb_check(args) -> Report:
    qg = _load(args)
    order = args.order if args.order is not None else 3
    if not 1 <= order <= 6:
        raise InputError("--order must be between 1 and 6 for wkb-check")
    ks = _grid(args.kappa_grid, DEFAULTS["k_grid"], "--kappa-grid")
    return _residual_report("wkb-check", smatrix_asymptotic_check(qg, ks, order))


COMMANDS = {
    "validate": (cmd_validate, "parse a graph file and check its invariants"),
    "spectrum": (cmd_spectrum, "eigenvalues up to --lambda-max"),
    "smatrix": (cmd_smatrix, "large-k series of the vertex scattering matrix"),
    "resolvent-trace": (cmd_resolvent_trace, "regularised resolvent trace at k = i kappa"),
    "heat-trace": (cmd_heat_trace, "numeric heat trace of a compact graph"),
    "coefficients": (cmd_coefficients, "exact resolvent (b) and heat (a) coefficients"),
    "heat-residuals": (cmd_heat_residuals, "heat trace minus its partial sum, with a slope test"),
    "resolvent-residuals": (cmd_resolvent_residuals, "resolvent trace minus its partial sum, with a slope test"),
    "wkb-check": (cmd_wkb_check, "S(k) minus its partial sum on real k (WKB fundamental system)"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", metavar="PATH", help="graph description (JSON)")
    common.add_argument("--normalize", action="store_true",
                        help="split tadpoles and move external potentials onto internal edges")
    common.add_argument("--lambda-max", type=float, metavar="X", help="spectral cut-off (default 200)")
    common.add_argument("--kappa-grid", metavar="a:b:n",
                        help="geometric grid of kappa (k for wkb-check); default 8:64:4 (wkb-check 20:320:5)")
    common.add_argument("--t-grid", metavar="a:b:n", help="geometric grid of times; default 2^-6..2^-9")
    common.add_argument("--order", type=int, metavar="N", help="truncation order N")
    common.add_argument("--regularization", choices=["d", "n", "D", "N"],
                        help="half-line reference on external edges (default n)")
    common.add_argument("--format", choices=["json", "csv", "text"], default="text")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument("--oracle", metavar="PATH", help="reference eigenvalues to compare against (spectrum)")
    common.add_argument("--negative-only", action="store_true", help="spectrum: only eigenvalues below zero")
    common.add_argument("--a3", choices=["exact", "alt"], default="exact",
                        help="heat-residuals: a3 with (exact) or without (alt) the 1/sqrt(pi) factor")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qgs", description="Spectra, resolvents and heat traces of quantum graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="qgs: %(message)s")
    try:
        thread_count()
    except ValueError as exc:
        print(f"qgs: {exc}", file=sys.stderr)
        return EXIT_INPUT
    fn, _ = COMMANDS[args.command]
    try:
        report = fn(args)
    except (InputError, GraphError, ConditionsError, ExcludedRegionError, FileNotFoundError) as exc:
        print(f"qgs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NearSpectrumError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qgs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"qgs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = render(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if report.status == EXIT_NUMERIC:
        print(f"qgs: {args.command}: numerical test failed", file=sys.stderr)
    return report.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
