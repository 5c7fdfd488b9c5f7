import json

import pytest
import sympy as sp

from qgs import cli

STAR = {"vertices": ["c", "p", "q", "r"],
        "internal_edges": [{"id": "1", "from": "c", "to": "p", "length": 1, "potential": [0, 1, -1]},
                           {"id": "2", "from": "c", "to": "q", "length": 1.25},
                           {"id": "3", "from": "c", "to": "r", "length": 0.75}],
        "conditions": {"c": {"delta": 0.5}, "p": "dirichlet", "q": "dirichlet", "r": "dirichlet"}}
NEUMANN = {"vertices": ["a", "b"], "internal_edges": [{"id": "e", "from": "a", "to": "b", "length": 1}],
           "conditions": {"a": "neumann", "b": "neumann"}}
OPEN_STAR = {"vertices": ["c"], "external_edges": [{"id": str(i), "at": "c"} for i in range(3)]}
TADPOLE = {"vertices": ["a", "b"],
           "internal_edges": [{"id": "t", "from": "a", "to": "a", "length": 2},
                              {"id": "s", "from": "a", "to": "b", "length": 1}],
           "conditions": {"b": "dirichlet"}}


@pytest.fixture
def graph(tmp_path):
    def write(doc, name="g.json"):
        p = tmp_path / name
        p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(p)
    return write


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(capsys, graph):
    code, out, _ = run(capsys, "validate", "--graph", graph(STAR))
    assert code == 0
    assert "conditions" in out and "ok" in out


def test_validate_rejects_non_projector(capsys, graph):
    doc = dict(OPEN_STAR, conditions={"c": {"P": [[2, 0, 0], [0, 0, 0], [0, 0, 0]], "L": [[0] * 3] * 3}})
    code, _, err = run(capsys, "validate", "--graph", graph(doc))
    assert code == 2
    assert "'c'" in err


def test_tadpole_needs_normalize(capsys, graph):
    path = graph(TADPOLE)
    code, out, err = run(capsys, "validate", "--graph", path)
    assert code == 0 and "normalisation needed" in out
    code, _, err = run(capsys, "spectrum", "--graph", path)
    assert code == 2 and "--normalize" in err
    code, out, _ = run(capsys, "spectrum", "--graph", path, "--normalize", "--lambda-max", "30", "--format", "json")
    assert code == 0 and json.loads(out)["rows"]


def test_spectrum_rows(capsys, graph):
    code, out, _ = run(capsys, "spectrum", "--graph", graph(NEUMANN), "--lambda-max", "100", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    lams = [r[0] for r in doc["rows"]]
    assert lams[0] == 0.0 and abs(lams[1] - 9.869604401089358) < 1e-10 and len(lams) == 4
    assert doc["summary"]["count"] == 4


def test_spectrum_non_compact(capsys, graph):
    path = graph(dict(OPEN_STAR, conditions={"c": {"delta": 3}}))
    assert run(capsys, "spectrum", "--graph", path)[0] == 2
    code, out, _ = run(capsys, "spectrum", "--graph", path, "--negative-only", "--format", "json")
    assert code == 0
    assert abs(json.loads(out)["rows"][0][0] + 1.0) < 1e-9


def test_oracle_pass_and_fail(capsys, graph, tmp_path):
    path = graph(NEUMANN)
    good = tmp_path / "good.txt"
    good.write_text("0\n9.869604401089358\n39.47841760435743\n")
    bad = tmp_path / "bad.txt"
    bad.write_text("0\n9.9\n39.47841760435743\n")
    assert run(capsys, "spectrum", "--graph", path, "--lambda-max", "50", "--oracle", str(good))[0] == 0
    assert run(capsys, "spectrum", "--graph", path, "--lambda-max", "50", "--oracle", str(bad))[0] == 1


def _coeffs(out):
    return {(r[0], r[1]): complex(*r[3]) for r in json.loads(out)["rows"]}


def test_coefficients(capsys, graph):
    code, out, _ = run(capsys, "coefficients", "--graph", graph(NEUMANN), "--format", "json")
    c = _coeffs(out)
    assert code == 0
    assert c[("b1", "N")] == pytest.approx(0.5j)
    assert c[("a2", "N")] == pytest.approx(0.5)


def test_kirchhoff_star_higher_coefficients_vanish(capsys, graph):
    code, out, _ = run(capsys, "coefficients", "--graph", graph(OPEN_STAR), "--format", "json")
    c = _coeffs(out)
    for kind in ("D", "N"):
        for name in ("a3 (with 1/sqrt(pi))", "a4", "a5"):
            assert c[(name, kind)] == 0


def test_heat_residuals_pass_and_fail(capsys, graph, monkeypatch):
    path = graph(STAR)
    code, out, _ = run(capsys, "heat-residuals", "--graph", path, "--order", "3", "--format", "json")
    assert code == 0 and json.loads(out)["summary"]["pass"] is True

    from qgs import heat
    real = heat.heat_coeffs

    def wrong(b):
        a = real(b)
        return type(a)((a.a[0], a.a[1] + sp.Rational(1, 5)) + a.a[2:], a.a3_alt)

    monkeypatch.setattr(heat, "heat_coeffs", wrong)
    code, _, err = run(capsys, "heat-residuals", "--graph", path, "--order", "3")
    assert code == 1 and "numerical test failed" in err


def test_resolvent_residuals_csv(capsys, graph):
    code, out, _ = run(capsys, "resolvent-residuals", "--graph", graph(dict(OPEN_STAR, conditions={"c": {"delta": 1}})),
                       "--order", "2", "--format", "csv")
    assert code == 0
    lines = [l for l in out.splitlines() if l and not l.startswith("#")]
    assert len(lines) >= 5  # header plus four kappas


@pytest.mark.parametrize("cmd", [["resolvent-trace", "--kappa-grid", "2:8:3"], ["heat-trace", "--t-grid", "0.01:0.1:3"],
                                 ["smatrix"], ["wkb-check"]])
def test_other_commands_run(capsys, graph, cmd):
    code, out, _ = run(capsys, cmd[0], "--graph", graph(STAR), *cmd[1:], "--format", "text")
    assert code == 0 and out.strip()


def test_output_is_deterministic(capsys, graph, monkeypatch, tmp_path):
    path = graph(STAR)
    outs = []
    for threads in ("1", "2", "1"):
        monkeypatch.setenv("QGS_THREADS", threads)
        target = tmp_path / f"out{len(outs)}.json"
        assert run(capsys, "resolvent-residuals", "--graph", path, "--order", "3", "--format", "json",
                   "--out", str(target))[0] == 0
        outs.append(target.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_digits_per_format(capsys, graph):
    _, out, _ = run(capsys, "spectrum", "--graph", graph(NEUMANN), "--lambda-max", "20", "--format", "csv")
    assert "3.1415926535897931" in out  # 17 significant digits
    _, text, _ = run(capsys, "spectrum", "--graph", graph(NEUMANN), "--lambda-max", "20", "--format", "text")
    assert "3.14159" in text.split() and "3.141593" not in text  # 6 significant digits


@pytest.mark.parametrize("value", ["0", "two", "-3"])
def test_bad_thread_count(capsys, graph, monkeypatch, value):
    monkeypatch.setenv("QGS_THREADS", value)
    code, _, err = run(capsys, "validate", "--graph", graph(STAR))
    assert code == 2 and "QGS_THREADS" in err


def test_malformed_json(capsys, graph):
    code, _, err = run(capsys, "validate", "--graph", graph('{"vertices": [\n'))
    assert code == 2 and "line" in err


def test_bad_arguments(capsys, graph):
    assert run(capsys, "spectrum")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "heat-residuals", "--graph", graph(STAR), "--order", "9")[0] == 2
    assert run(capsys, "heat-residuals", "--graph", graph(OPEN_STAR))[0] == 2
    assert run(capsys, "resolvent-trace", "--graph", graph(STAR), "--kappa-grid", "1:2")[0] == 2
