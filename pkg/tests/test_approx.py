from fractions import Fraction

import pytest
from hypothesis import given

from adjforge import approx as A
from adjforge import conslaw as CL
from adjforge import expr as X
from adjforge import suite
from adjforge.adjoint import adjoint_system
from adjforge.errors import InputError
from adjforge.expr import Parameter, Space
from adjforge.parser import parse_expr
from adjforge.selfadjoint import Substitution, on_shell_reduce, verify_substitution

from strategies import differential_functions

EPS = Parameter("eps", X.SMALL)
SP = Space(["t", "x"], ["u"], ["v"], {"eps": X.SMALL})


def P(text):
    return parse_expr(text, SP)


def eps_pairs():
    return differential_functions.flatmap(lambda a: differential_functions.map(lambda b: A.EpsExpr(a, b)))


@given(eps_pairs(), eps_pairs(), eps_pairs())
def test_ring_axioms(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + A.EpsExpr() == a
    assert a * A.EpsExpr(X.ONE) == a
    assert (a - a).is_zero()


@given(eps_pairs(), eps_pairs())
def test_product_is_truncated_product(a, b):
    assert A.eps_truncate(a.to_expr(EPS) * b.to_expr(EPS), EPS) == a * b


def test_truncation():
    assert A.eps_truncate(P("(1 + eps*u)^2"), EPS) == A.EpsExpr(X.ONE, P("2*u"))
    assert A.eps_truncate(P("eps^2*u_x"), EPS).is_zero()
    sys = suite.system("van_der_pol")
    doc = suite.document("van_der_pol")
    split = A.eps_truncate(sys.equations[0], sys.small_parameter)
    assert split == A.EpsExpr(doc.expr("y'' + y"), doc.expr("y'^3 - y'"))


def test_eps_inside_function_rejected():
    with pytest.raises(InputError):
        A.eps_truncate(P("sin(eps*u)"), EPS)


def test_van_der_pol_adjoint():
    sys = suite.system("van_der_pol")
    doc = suite.document("van_der_pol")
    (got,) = A.approx_adjoint(sys)
    assert got == A.EpsExpr(doc.expr("z'' + z"), doc.expr("z' - 3*z'*y'^2 + 6*z*y*y'"))


def test_perturbed_kdv_adjoint():
    sys = suite.system("perturbed_kdv")
    doc = suite.document("perturbed_kdv")
    (got,) = A.approx_adjoint(sys)
    assert got.to_expr(sys.small_parameter) == -doc.expr("v_t - v_xxx - u*v_x + eps*v")


def test_eps_free_system_matches_exact_pipeline():
    sys = suite.system("kdv")
    assert [a.zeroth for a in A.approx_adjoint(sys)] == adjoint_system(sys)
    assert all(not a.first.terms for a in A.approx_adjoint(sys))
    sub = suite.substitution("kdv", "strict")
    assert A.approx_verify_substitution(sys, sub).passed == verify_substitution(sys, sub).passed
    g = suite.document("kdv").symmetries["X1"]
    approx = A.approx_conserved_vector(sys, sub, g)
    exact = CL.conserved_vector(sys, sub, g)
    assert approx.passed
    assert all(not c.first.terms for c in approx.components.values())
    for i in sys.indep:
        assert approx.components[i].zeroth == on_shell_reduce(exact[i], sys)


@pytest.mark.parametrize("sub, ok", [("simple", True), ("family", True), ("unperturbed", False)])
def test_perturbed_kdv_substitutions(sub, ok):
    v = A.approx_verify_substitution(suite.system("perturbed_kdv"), suite.substitution("perturbed_kdv", sub))
    assert v.passed is ok
    if not ok:
        (r,) = v.residual
        assert X.is_zero(r.zeroth)
        assert r.first == suite.document("perturbed_kdv").expr("-2*u")


def test_zeroth_part_must_be_nontrivial():
    sys = suite.system("perturbed_kdv")
    with pytest.raises(InputError):
        A.approx_verify_substitution(sys, Substitution({"v": P("eps*x")}))


@pytest.mark.parametrize("f", sorted(suite.G_RHS))
def test_g_equations(f):
    sys = suite.system("van_der_pol")
    doc = suite.document("van_der_pol")
    ge = A.approx_determining_g(sys, doc.expr(f))
    assert X.is_zero(ge.rhs - doc.expr(suite.G_RHS[f]))
    assert ge.lhs == A.g_operator(sys, ge.g)


def test_g_equation_for_zero_f():
    sys = suite.system("van_der_pol")
    assert not A.approx_determining_g(sys, X.ZERO).rhs.terms


def test_f_must_not_depend_on_derivatives():
    sys = suite.system("van_der_pol")
    with pytest.raises(InputError):
        A.approx_determining_g(sys, suite.document("van_der_pol").expr("y'"))


def test_van_der_pol_residual_is_the_g_defect():
    sys = suite.system("van_der_pol")
    doc = suite.document("van_der_pol")
    v = A.approx_conserved_vector(sys, suite.substitution("van_der_pol", "approx"), doc.symmetries["X1"])
    ge = A.approx_determining_g(sys, doc.expr("alpha*y + beta*cos(x) + gamma*sin(x)"))
    assert not v.residual.zeroth.terms
    assert X.is_zero(v.residual.first - doc.expr("y'") * ge.defect())


def test_perturbed_kdv_vector():
    sys = suite.system("perturbed_kdv")
    doc = suite.document("perturbed_kdv")
    v = A.approx_conserved_vector(sys, suite.substitution("perturbed_kdv", "simple"), doc.symmetries["X4"])
    assert v.passed and v.residual.vanishes()
    assert A.approx_equivalent(sys, v.components, doc.vectors["X4"]) == Fraction(-3, 2)
    fixture = {i: A.eps_truncate(c, sys.small_parameter) for i, c in doc.vectors["X4"].items()}
    assert A.approx_residual(sys, fixture).vanishes()
