import warnings

import pytest
from hypothesis import given

from adjforge import expr as X
from adjforge import suite
from adjforge.errors import AnsatzInsufficient, DivisionByZeroAtU0, InputError, NonEliminable
from adjforge.parser import parse_problem
from adjforge.selfadjoint import (
    Substitution,
    determining_system,
    multiplier_rewrite,
    multiplier_to_phi,
    on_shell_reduce,
    solve_determining,
    substitute_adjoint,
    verify_substitution,
)

from strategies import polynomials


def family(name, cls="pointwise", degree=3):
    sols = solve_determining(determining_system(suite.system(name), cls), degree)
    return [X.to_text(e) for s in sols for e in s.mapping.values()]


def test_reduce_kdv():
    doc = suite.document("kdv")
    sys = doc.system()
    assert on_shell_reduce(doc.expr("u_t - u*u_x"), sys) == doc.expr("u_xxx")
    assert on_shell_reduce(sys.equations[0], sys) == X.ZERO


def test_reduce_short_pulse_chain():
    doc = suite.document("short_pulse")
    sys = doc.system()
    sub = suite.substitution("short_pulse", "differential")
    assert on_shell_reduce(substitute_adjoint(doc.expr("v_xt"), sub, sys), sys) == doc.expr("u_t")


def test_non_eliminable_lead():
    doc = parse_problem("[vars]\nindependent = t, x\ndependent = u\n[equation e]\nexpr = u_t^2 - u_xx\nlead = u_t\n")
    with pytest.raises(NonEliminable):
        on_shell_reduce(doc.expr("u_tx"), doc.system())


@pytest.mark.parametrize("name, sub, cls", [
    ("kdv", "strict", "strict"),
    ("kdv", "family", "nonlinear"),
    ("kompaneets", "x2", "nonlinear"),
    ("quasi_wave", "exp", "quasi"),
    ("sine_gordon", "differential", "nonlinear-differential"),
    ("short_pulse", "differential", "nonlinear-differential"),
])
def test_verified_substitutions(name, sub, cls):
    v = verify_substitution(suite.system(name), suite.substitution(name, sub))
    assert v.passed and v.cls == cls


def test_heat_is_not_strictly_self_adjoint():
    doc = suite.document("heat")
    v = verify_substitution(doc.system(), suite.substitution("heat", "strict"))
    assert not v.passed and v.cls == "not-found"
    assert v.residual == [doc.expr("-2*u_xx")]


def test_trivial_substitution_rejected():
    sys = suite.system("heat")
    with pytest.raises(InputError):
        verify_substitution(sys, Substitution({"v": X.ZERO}))


def test_multipliers_recovered():
    v = verify_substitution(suite.system("kdv"), suite.substitution("kdv", "strict"))
    assert v.multipliers == [{(0, ()): X.const(-1)}]


def test_determining_nonlinear_heat():
    dets = determining_system(suite.system("nonlinear_heat"), "pointwise")
    assert [X.to_text(e) for e in dets] == ["phi'{0,0,1}(t, x, u)", "phi'{0,2,0}(t, x, u)", "phi'{1,0,0}(t, x, u)"]


def test_determining_membrane_forces_zero():
    dets = determining_system(suite.system("membrane"), "pointwise")
    assert [X.to_text(e) for e in dets] == ["phi(t, x, y, u)"]


def test_determining_rejects_differential_class():
    with pytest.raises(InputError):
        determining_system(suite.system("heat"), "differential")


def test_solutions():
    assert family("heat", degree=1) == ["x*C1 + C2"]
    assert family("nonlinear_heat", degree=1) == ["x*C1 + C2"]
    assert family("aniso_heat2", degree=2) == ["x*y*C1 + x*C2 + y*C3 + C4"]
    assert family("irrigation_sac", degree=1) == ["x*C1*exp(t*a) + C2*exp(t*a)"]
    assert family("membrane") == []


def test_u_only_searches_return_constants():
    assert family("fornberg_whitham", "u-only") == ["C1"]
    assert family("heat", "u-only") == ["C1"]
    assert family("kompaneets", "u-only") == []


def test_multiplier_rewrite():
    cases = [("kompaneets", "x2", "x^2/u"), ("nonlinear_wave", "time", "t/u"), ("evolution", "quasi", "1/(u*f(u))")]
    for name, sub, mu in cases:
        doc = suite.document(name)
        with pytest.warns(DivisionByZeroAtU0):
            rep = multiplier_rewrite(doc.system(), suite.substitution(name, sub))
        assert rep.mu == doc.expr(mu)
        assert rep.verdict.passed and rep.verdict.cls == "strict"


@given(polynomials([X.indep("t"), X.indep("x"), X.jet("u")], 3, 2).filter(lambda e: e.terms))
def test_multiplier_duality(phi):
    sys = suite.system("nonlinear_wave")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DivisionByZeroAtU0)
        rep = multiplier_rewrite(sys, Substitution({"v": phi}))
    assert multiplier_to_phi(rep.mu, sys) == phi
    assert rep.phi == phi


def test_non_polynomial_coefficients_warn():
    doc = parse_problem("[vars]\nindependent = t, x\ndependent = u\n"
                        "[equation e]\nexpr = u_t - u_xx - sin(x)*u_x\nlead = u_t\n")
    with pytest.warns(AnsatzInsufficient):
        solve_determining(determining_system(doc.system(), "pointwise"), 2)
