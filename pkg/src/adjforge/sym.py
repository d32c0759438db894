"""Conversion between kernel expressions and sympy (used for exact linear algebra)."""

from __future__ import annotations

from fractions import Fraction

import sympy

from . import expr as X
from .expr import Expr

_SYMPY_FUNCS = {"sin": sympy.sin, "cos": sympy.cos, "tan": sympy.tan, "exp": sympy.exp, "ln": sympy.log}


def _symbol_name(a) -> str:
    if isinstance(a, X.Jet):
        return a.var + ("_" + "_".join(a.index) if a.index else "")
    return a.name


def to_sympy(e: Expr, table: dict | None = None):
    """Translate e; ``table`` collects symbol -> atom for the way back."""
    table = {} if table is None else table
    total = sympy.Integer(0)
    for m, c in e.terms.items():
        t = sympy.Rational(c.numerator, c.denominator)
        for a, x in m:
            t *= _atom(a, table) ** sympy.Rational(Fraction(x).numerator, Fraction(x).denominator)
        total += t
    return total


def _atom(a, table):
    if isinstance(a, X.Func):
        args = [to_sympy(x, table) for x in a.args]
        if a.builtin:
            return _SYMPY_FUNCS[a.name](*args)
        name = a.name if not any(a.derivs) else a.name + "_d" + "".join(map(str, a.derivs))
        return sympy.Function(name)(*args)
    if isinstance(a, X.SumPow):
        return to_sympy(a.base, table)
    s = sympy.Symbol(_symbol_name(a))
    table[s] = a
    return s


def from_sympy(x, table: dict | None = None) -> Expr:
    """Translate a sympy rational expression in symbols back to a kernel expression.

    Unknown symbols become generic parameters.
    """
    table = table or {}
    x = sympy.sympify(x)
    if x.is_Rational:
        return Expr.const(Fraction(int(x.p), int(x.q)))
    if x.is_Symbol:
        a = table.get(x)
        return Expr.atom(a) if a is not None else X.param(x.name)
    if x.is_Add:
        out = X.ZERO
        for t in x.args:
            out = out + from_sympy(t, table)
        return out
    if x.is_Mul:
        out = X.ONE
        for t in x.args:
            out = out * from_sympy(t, table)
        return out
    if x.is_Pow:
        base, ex = x.args
        if ex.is_Rational:
            return from_sympy(base, table) ** Fraction(int(ex.p), int(ex.q))
    if isinstance(x, sympy.exp):
        return X.exp(from_sympy(x.args[0], table))
    for name, f in _SYMPY_FUNCS.items():
        if isinstance(x, f) and name != "exp":
            return X.func(name, from_sympy(x.args[0], table))
    raise ValueError(f"cannot convert {x} from sympy")
