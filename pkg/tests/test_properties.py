"""Randomized property suites, 1000 seed-fixed cases each."""

import math

import numpy as np
import sympy as sp
from hypothesis import assume, given
from hypothesis import strategies as st

from adjforge import expr as X
from adjforge.adjoint import ProblemSystem, adjoint_system, second_adjoint
from adjforge.calculus import characteristic, euler_lagrange, noether_flux, prolonged_action, total_derivative
from adjforge.expr import Jet, Space
from adjforge.parser import parse_expr
from adjforge.selfadjoint import determining_system, solve_determining, verify_substitution

from strategies import (
    BASE,
    POLY_JETS,
    SPACE,
    differential_functions,
    evolution_equations,
    expr_pairs,
    exprs,
    generators,
    lagrangians,
    linear_operators,
    polynomials,
    single_equation,
)

_POINT = {"t": 0.7, "x": -1.3, "a": 0.45, "u": 0.9, "u_t": -0.35, "u_x": 1.1,
          "u_xx": -0.8, "u_tx": 0.25, "u_tt": 1.6}


def _point_for(e):
    out = {}
    for a in e.leaves():
        out[a] = _POINT[a.text()]
    return out


@given(exprs)
def test_canonical_form_is_idempotent(e):
    once = X.canonicalize(e, SPACE)
    assert X.canonicalize(once, SPACE) == once
    assert parse_expr(X.to_text(once), SPACE) == once


@given(expr_pairs)
def test_evaluation_matches_sympy(pair):
    e, oracle = pair
    want = complex(oracle.subs({sp.Symbol(k): v for k, v in _POINT.items()}).evalf())
    assume(math.isfinite(abs(want)) and abs(want) < 1e8)
    got = X.numeric(e, _point_for(e))
    assert abs(got - want.real) <= 1e-9 * (1 + abs(want))


@given(exprs, exprs, exprs)
def test_ring_identities(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c
    assert (a + b) + c == a + (b + c)


@given(differential_functions, st.sampled_from(["t", "x"]), st.sampled_from(["t", "x"]))
def test_total_derivatives_commute(e, i, j):
    assert total_derivative(total_derivative(e, i), j) == total_derivative(total_derivative(e, j), i)


@given(differential_functions, differential_functions, st.sampled_from(["t", "x"]))
def test_leibniz_rule(a, b, i):
    assert total_derivative(a * b, i) == total_derivative(a, i) * b + a * total_derivative(b, i)


@given(differential_functions, differential_functions)
def test_euler_lagrange_annihilates_divergences(ht, hx):
    div = total_derivative(ht, "t") + total_derivative(hx, "x")
    assert not euler_lagrange(div, "u").terms


@given(lagrangians, generators)
def test_operator_identity(L, g):
    lhs = prolonged_action(g, L, dep=["u"])
    for i in ("t", "x"):
        lhs = lhs + total_derivative(g.xi[i], i) * L
    rhs = characteristic(g, "u") * euler_lagrange(L, "u")
    for i in ("t", "x"):
        rhs = rhs + total_derivative(noether_flux(L, g, i, include_xi_L=True, dep=["u"]), i)
    assert lhs == rhs


@given(linear_operators())
def test_second_adjoint_of_linear_operator(F):
    sys = single_equation(F, POLY_JETS[1])
    rep = second_adjoint(sys)
    assert rep.equal
    assert rep.second == X.rename_vars(F, {"u": rep.w})


@given(evolution_equations(), st.sampled_from(["u-only", "pointwise"]), st.integers(1, 2))
def test_solve_determining_is_sound(F, cls, degree):
    sys = single_equation(F, POLY_JETS[1])
    for sub in solve_determining(determining_system(sys, cls), degree):
        assert verify_substitution(sys, sub).passed
