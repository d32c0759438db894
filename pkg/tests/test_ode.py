import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjforge import expr as X
from adjforge import ode as O
from adjforge import suite
from adjforge.calculus import NonlocalRules, total_derivative
from adjforge.errors import NotIntegratingFactor, NotLinear
from adjforge.expr import Space
from adjforge.parser import parse_expr

SP = Space(["x"], ["y"], ["z"], aux=["E"], funcs=["P", "Q"])


def P(text):
    return parse_expr(text, SP)


def ode_of(text, rules=None):
    return O.LinearODE.from_expr(P(text), rules=rules or NonlocalRules())


EXACT = "y'' + y'*sin(x) + y*cos(x)"
EX18 = "y'' + sin(x)/x^2*y' + (cos(x)/x^2 - sin(x)/x^3)*y"
E_RULES = NonlocalRules.of({"E": {"x": P("P(x)*E")}})


def test_from_expr_reads_coefficients_and_rhs():
    ode = ode_of("x*y'' + y - x^2")
    assert ode.order == 2
    assert ode.coeffs == [P("x"), X.ZERO, X.ONE]
    assert ode.rhs == P("x^2")


def test_nonlinear_rejected():
    with pytest.raises(NotLinear):
        ode_of("y*y' + y")
    with pytest.raises(NotLinear):
        O.LinearODE([X.ZERO, X.ONE])


def test_first_order_adjoint():
    adj = O.ode_adjoint(ode_of("y' + P(x)*y"))
    assert adj.operator() == P("-z' + P(x)*z")


def test_example_adjoint():
    adj = O.ode_adjoint(ode_of(EX18))
    assert X.is_zero(adj.operator() - P("z'' - sin(x)/x^2*z' + sin(x)/x^3*z"))


def test_concomitant():
    assert O.concomitant_psi(ode_of("y' + P(x)*y", E_RULES), P("E")) == P("E*y")
    assert X.is_zero(O.concomitant_psi(ode_of(EX18), P("x")) - P("x*y' + (sin(x)/x - 1)*y"))
    assert O.concomitant_psi(ode_of("y'"), X.ONE) == P("y")


def test_integrating_factor_routes():
    for text, phi, want in ((EX18, "x", True), (EX18, "1", False), (EXACT, "1", True)):
        check = O.integrating_factor_check(ode_of(text), P(phi))
        assert check.passed is want and check.agree


def test_first_integrals():
    fi = O.reduce_order(ode_of(EXACT), X.ONE)
    assert fi.verified and fi.psi == P("y' + y*sin(x)") and not fi.integral.terms
    ode = ode_of(EXACT)
    ode.rhs = P("2*x")
    fi = O.reduce_order(ode, X.ONE)
    assert fi.verified and fi.integral == P("x^2")
    fi = O.reduce_order(ode_of(EX18), P("x"))
    assert fi.verified and X.is_zero(fi.psi - P("x*y' + (sin(x)/x - 1)*y"))


def test_quadrature_stays_symbolic():
    ode = ode_of("y' + P(x)*y", E_RULES)
    ode.rhs = P("Q(x)")
    fi = O.reduce_order(ode, P("E"))
    assert fi.verified
    assert fi.quadratures == {"I1": P("E*Q(x)")}
    assert fi.text() == "E*y = C1 + I1"


def test_not_an_integrating_factor():
    with pytest.raises(NotIntegratingFactor):
        O.reduce_order(ode_of(EX18), X.ONE)
    with pytest.raises(NotIntegratingFactor):
        O.integrating_factor_check(ode_of(EX18), X.ZERO)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_bilinear_identity(seed, order):
    ode = suite.random_linear_ode(np.random.default_rng(seed), order)
    assert not suite.bilinear_defect(ode, X.jet("z")).terms


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_double_adjoint(seed, order):
    ode = suite.random_linear_ode(np.random.default_rng(seed), order)
    back = O.ode_adjoint(O.ode_adjoint(ode), z="y")
    assert back.operator() == ode.operator()


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_factor_routes_agree(seed, order):
    rng = np.random.default_rng(seed)
    ode = suite.random_linear_ode(rng, order)
    phi = X.indep("x") ** int(rng.integers(0, 3)) + int(rng.integers(-2, 3))
    if phi.terms:
        assert O.integrating_factor_check(ode, phi).agree


def test_derivative_rule_of_quadrature_atom():
    atom, rules = O.antiderivative_atom("I", "x", P("x^2"))
    assert total_derivative(atom, "x", rules) == P("x^2")
