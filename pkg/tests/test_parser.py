import pytest

from adjforge import corpus
from adjforge import expr as X
from adjforge.errors import DuplicateSection, MalformedIndex, MissingLeadingDerivative, SyntaxError, UndeclaredName
from adjforge.expr import Space
from adjforge.parser import load_problem, parse_expr, parse_problem

SP = Space(["t", "x", "y"], ["u"], ["v"])


def P(text):
    return parse_expr(text, SP)


def test_kdv_expression():
    u = X.jet("u")
    assert P("u_t - u_xxx - u*u_x") == X.jet("u", "t") - X.jet("u", "x", "x", "x") - u * X.jet("u", "x")


def test_precedence():
    assert P("1/2*u^2") == X.const(1) / 2 * X.jet("u") ** 2
    assert P("-u^2") == -(X.jet("u") ** 2)
    assert P("2^3^1") == X.const(8)
    assert P("u - x - t") == X.jet("u") - X.indep("x") - X.indep("t")


def test_function_call():
    assert P("v*(u_xy - sin(u))") == X.jet("v") * (X.jet("u", "x", "y") - X.sin(X.jet("u")))


def test_braced_and_repeated_indices():
    assert P("u_{xxt}") == P("u_txx") == X.jet("u", "t", "x", "x")


def test_implicit_multiplication_is_an_error():
    with pytest.raises(SyntaxError) as err:
        P("u u_x")
    assert err.value.column >= 1


def test_undeclared_and_malformed():
    with pytest.raises(UndeclaredName):
        P("w + u")
    with pytest.raises(MalformedIndex):
        P("u_z")


def test_kdv_document():
    doc = load_problem(corpus.path("kdv"))
    assert doc.independent_vars == ("t", "x")
    assert len(doc.equations) == 1
    assert doc.equations[0].lead == X.Jet("u", ("t",))


def test_chaplygin_nonlocal_rules():
    doc = load_problem(corpus.path("chaplygin"))
    assert doc.rules.get("sigma", "x") == doc.expr("-1/p")
    assert doc.rules.get("sigma", "t") == doc.expr("v/p")


def test_undeclared_dependent_in_document():
    with pytest.raises(UndeclaredName):
        parse_problem("[vars]\nindependent = t, x\ndependent = u\n[equation e]\nexpr = u_t - w_xx\nlead = u_t\n")


def test_duplicate_section():
    doc = "[vars]\nindependent = x\ndependent = u\n[equation e]\nexpr = u_x\nlead = u_x\n[equation e]\nexpr = u\nlead = u_x\n"
    with pytest.raises(DuplicateSection):
        parse_problem(doc)


def test_missing_leading_derivative():
    with pytest.raises(MissingLeadingDerivative):
        parse_problem("[vars]\nindependent = t, x\ndependent = u\n[equation e]\nexpr = u_t - u_xx\n")
    with pytest.raises(MissingLeadingDerivative):
        parse_problem("[vars]\nindependent = t, x\ndependent = u\n[equation e]\nexpr = u_t - u_xx\nlead = u_tt\n")


@pytest.mark.parametrize("name", corpus.names())
def test_pretty_print_round_trip(name):
    doc = load_problem(corpus.path(name))
    exprs = [e.expr for e in doc.equations]
    exprs += [e for s in doc.substitutions.values() for e in s.mapping.values()]
    exprs += [e for vec in doc.vectors.values() for e in vec.values()]
    for e in exprs:
        text = X.to_text(e)
        assert X.to_text(doc.expr(text)) == text
        assert doc.expr(text) == e
