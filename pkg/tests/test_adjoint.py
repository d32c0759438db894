import pytest

from adjforge import expr as X
from adjforge import suite
from adjforge.adjoint import (
    adjoint_system,
    formal_lagrangian,
    linear_adjoint_consistency,
    proportional,
    second_adjoint,
)
from adjforge.errors import NotLinear
from adjforge.expr import Space
from adjforge.parser import parse_problem


def doc_of(expr, lead, indep="t, x", dep="u"):
    return parse_problem(f"[vars]\nindependent = {indep}\ndependent = {dep}\n"
                         f"[equation e]\nexpr = {expr}\nlead = {lead}\n")


def adjoint_of(name):
    return adjoint_system(suite.system(name))


def test_formal_lagrangian_kdv():
    doc = suite.document("kdv")
    assert formal_lagrangian(doc.system()) == doc.expr("v*(u_t - u_xxx - u*u_x)")


def test_formal_lagrangian_chaplygin():
    doc = suite.document("chaplygin")
    want = doc.expr("U*(v_t + v*v_x + p_x/rho) + R*(rho_t + v*rho_x + rho*v_x) + P*(p_t + v*p_x - p*v_x)")
    assert formal_lagrangian(doc.system()) == want


def test_formal_lagrangian_trivial():
    doc = doc_of("u", "u")
    assert formal_lagrangian(doc.system()) == doc.expr("v*u")


def test_heat_adjoint():
    doc = suite.document("heat")
    assert adjoint_of("heat") == [doc.expr("-v_t - v_xx")]


def test_kdv_adjoint_up_to_sign():
    doc = suite.document("kdv")
    (got,) = adjoint_of("kdv")
    assert proportional(got, doc.expr("v_t - v_xxx - u*v_x")) == -1


def test_fornberg_whitham_adjoint():
    doc = suite.document("fornberg_whitham")
    want = doc.expr("-v_t + v_txx + u*v_xxx - u*v_x - v_x")
    assert adjoint_of("fornberg_whitham") == [want]


def test_adjoint_counts_follow_dependent_variables():
    doc = parse_problem("[vars]\nindependent = t, x\ndependent = u, w\n[equation e]\nexpr = u_t - w_x\nlead = u_t\n")
    assert len(adjoint_system(doc.system())) == 2


def test_adjoint_is_linear_in_adjoint_variables():
    for name in ("kdv", "chaplygin", "sine_gordon", "fornberg_whitham", "kompaneets"):
        sys = suite.system(name)
        for Fs in adjoint_system(sys):
            for m in Fs.terms:
                deg = sum(e for a, e in m if isinstance(a, X.Jet) and a.var in sys.adjoint_vars)
                assert deg == 1


def test_linear_consistency_heat():
    rep = linear_adjoint_consistency(suite.system("heat"))
    doc = suite.document("heat")
    assert rep.passed and rep.psi_identity
    assert rep.psi["t"] == doc.expr("u*v")
    assert rep.psi["x"] == doc.expr("u*v_x - v*u_x")


def test_linear_consistency_general_second_order():
    doc = parse_problem("[vars]\nindependent = x, y\ndependent = u\n[functions]\nnames = a, b, c, d\n"
                        "[equation e]\nexpr = a(x, y)*u_xx + d(x, y)*u_xy + u_yy + b(x, y)*u_x + c(x, y)*u\n"
                        "lead = u_yy\n")
    rep = linear_adjoint_consistency(doc.system())
    assert rep.passed and rep.psi_identity


def test_nonlinear_rejected():
    with pytest.raises(NotLinear):
        linear_adjoint_consistency(doc_of("u_t - u*u_x", "u_t").system())


def test_second_adjoint_sine_gordon():
    rep = second_adjoint(suite.system("sine_gordon"))
    w = rep.w
    sp = Space(["x", "y"], ["u", w])
    assert rep.equal
    assert rep.second == X.jet(w, "x", "y") - X.jet(w) * X.cos(X.jet("u"))
    del sp


def test_second_adjoint_linear_and_trivial():
    for expr, lead in (("u_t - u_xx + x*u_x", "u_t"), ("u_t", "u_t")):
        sys = doc_of(expr, lead).system()
        rep = second_adjoint(sys)
        assert rep.equal
        assert rep.second == X.rename_vars(sys.equations[0], {"u": rep.w})


def test_second_adjoint_kdv_matches_linearization():
    assert second_adjoint(suite.system("kdv")).equal
