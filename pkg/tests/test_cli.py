import io
import json
import subprocess
import sys

import pytest

from adjforge import corpus, suite
from adjforge.adjoint import proportional
from adjforge.cli import AnalysisReport, main, run


def call(*argv):
    buf = io.StringIO()
    code, rep = run(list(argv), buf)
    return code, rep, buf.getvalue()


def fixture(name):
    return str(corpus.path(name))


def test_adjoint_kdv():
    code, rep, text = call("adjoint", fixture("kdv"))
    assert code == 0
    assert rep.records[0]["kind"] == "adjoint"
    doc = suite.document("kdv")
    # reports render expressions in the input grammar, so they parse back
    got = doc.expr(rep.records[0]["expr"])
    assert proportional(got, doc.expr("v_t - v_xxx - u*v_x")) is not None


def test_bare_fixture_name_resolves_to_corpus():
    assert call("adjoint", "heat")[0] == 0


def test_kompaneets_search():
    code, rep, text = call("check-sa", fixture("kompaneets"), "--search", "--class", "pointwise", "--degree", "2")
    assert code == 0
    assert "x^2" in text


def test_divtest_passes():
    code, _, _ = call("divtest", fixture("ode16"), "--expr", "y'' + y'*sin(x) + y*cos(x)")
    assert code == 0


def test_negative_verdict_exit_code():
    code, rep, _ = call("--json", "check-sa", fixture("heat"), "--sub", "strict")
    assert code == 1 and rep.status == 1


def test_conslaw_sine_gordon():
    code, rep, text = call("conslaw", fixture("sine_gordon"), "--symmetry", "X1", "--sub", "d1")
    assert code == 0
    assert "cos(u)" in text and "u_x^2/2" in text


def test_direct_chaplygin_fails():
    assert call("direct", fixture("chaplygin"), "--mu", "0, sigma, 0")[0] == 1
    assert call("direct", fixture("kdv"), "--mu", "x + t*u")[0] == 0


def test_ode_commands():
    assert call("ode", "adjoint", fixture("ode18"))[0] == 0
    assert call("ode", "factor-check", fixture("ode18"), "--phi", "x")[0] == 0
    assert call("ode", "factor-check", fixture("ode18"), "--phi", "1")[0] == 1
    code, _, text = call("ode", "reduce", fixture("ode17"), "--phi", "E", "--aux", "E: P(x)*E")
    assert code == 0 and "E*y = C1" in text


def test_approx_commands():
    assert call("approx", "adjoint", fixture("van_der_pol"))[0] == 0
    assert call("approx", "check-sa", fixture("perturbed_kdv"), "--sub", "simple")[0] == 0
    assert call("approx", "check-sa", fixture("perturbed_kdv"), "--sub", "unperturbed")[0] == 1
    assert call("approx", "conslaw", fixture("perturbed_kdv"), "--sub", "simple", "--symmetry", "X4")[0] == 0


def test_constraints():
    code, _, text = call("constraints", fixture("chaplygin"), "--vector", "mass")
    assert code == 0 and "rho_t" in text


def test_input_errors(tmp_path):
    assert call("adjoint", str(tmp_path / "missing.prob"))[0] == 2
    bad = tmp_path / "bad.prob"
    bad.write_text("[vars]\nindependent = x\ndependent = u\n[equation e]\nexpr = u u_x\nlead = u_x\n")
    assert call("adjoint", str(bad))[0] == 2
    assert call("check-sa", fixture("heat"), "--sub", "nope")[0] == 2
    assert call("no-such-command")[0] == 2


def test_report_round_trip():
    code, rep, text = call("--json", "conslaw", fixture("kdv"), "--symmetry", "X2", "--sub", "strict")
    back = AnalysisReport.from_jsonl(text)
    assert back == rep
    assert back.to_jsonl() == text
    for line in text.splitlines():
        json.loads(line)


def test_seed_flag_and_environment(monkeypatch):
    _, a, _ = call("--json", "--seed", "5", "corpus", "run", "--filter", "kdv")
    _, b, _ = call("--json", "--seed", "5", "corpus", "run", "--filter", "kdv")
    assert a.records == b.records
    monkeypatch.setenv("ADJFORGE_SEED", "not-a-number")
    assert call("adjoint", "heat")[0] == 2
    assert call("--seed", "3", "adjoint", "heat")[0] == 0
    monkeypatch.setenv("ADJFORGE_SEED", "9")
    assert call("adjoint", "heat")[0] == 0


def test_corpus_run_lists_anchors():
    code, rep, text = call("corpus", "run", "--criterion", "1")
    assert code == 0
    anchors = [r["anchor"] for r in rep.records if r["kind"] == "check"]
    assert anchors and all(anchors)


def test_main_and_module_entry_point():
    assert main(["adjoint", "heat"]) == 0
    proc = subprocess.run([sys.executable, "-m", "adjforge", "adjoint", "kdv"], capture_output=True, text=True)
    assert proc.returncode == 0 and "v_xxx" in proc.stdout
