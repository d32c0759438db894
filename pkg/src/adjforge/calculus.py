"""Total derivatives, Euler operators, characteristics and Noether fluxes."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Iterable, Mapping

from .errors import MissingNonlocalRule
from .expr import (
    ONE,
    ZERO,
    AuxVar,
    Expr,
    IndepVar,
    Jet,
    derive,
    is_zero,
)


@dataclass(frozen=True)
class NonlocalRules:
    """Derivative rules for auxiliary variables: (aux, indep) -> Expr."""

    rules: tuple = ()

    @staticmethod
    def of(table: Mapping[str, Mapping[str, Expr]] | None) -> "NonlocalRules":
        if not table:
            return EMPTY_RULES
        items = tuple(sorted(((a, i, e) for a, row in table.items() for i, e in row.items()),
                             key=lambda t: (t[0], t[1])))
        return NonlocalRules(items)

    def get(self, aux: str, i: str):
        for a, j, e in self.rules:
            if a == aux and j == i:
                return e
        return None

    def names(self) -> set:
        return {a for a, _, _ in self.rules}

    def table(self) -> dict:
        out: dict = {}
        for a, i, e in self.rules:
            out.setdefault(a, {})[i] = e
        return out


EMPTY_RULES = NonlocalRules()


@dataclass
class Generator:
    """X = xi^i d/dx^i + eta^alpha d/du^alpha."""

    xi: dict = field(default_factory=dict)
    eta: dict = field(default_factory=dict)
    name: str = ""


# ---------------------------------------------------------------- total derivatives

_atom_memos: dict = {}


def _leaf_map(i: str, rules: NonlocalRules):
    def leaf(a):
        if isinstance(a, Jet):
            return Expr.atom(a.shifted(i))
        if isinstance(a, IndepVar):
            return ONE if a.name == i else None
        if isinstance(a, AuxVar):
            r = rules.get(a.name, i)
            if r is None:
                raise MissingNonlocalRule(f"no rule for d{a.name}/d{i}")
            return r if r.terms else None
        return None
    return leaf


@lru_cache(maxsize=100_000)
def total_derivative(e: Expr, i: str, rules: NonlocalRules = EMPTY_RULES) -> Expr:
    """D_i e: explicit x^i dependence plus index shift of every jet, aux variables by rule."""
    memo = _atom_memos.setdefault((i, rules), {})
    if len(memo) > 200_000:
        memo.clear()
    return derive(e, _leaf_map(i, rules), memo)


def total_derivative_multi(e: Expr, index: Iterable[str], rules: NonlocalRules = EMPTY_RULES) -> Expr:
    for i in index:
        if not e.terms:
            break
        e = total_derivative(e, i, rules)
    return e


def clear_caches():
    total_derivative.cache_clear()
    _atom_memos.clear()


# ---------------------------------------------------------------- multi-indices

def multiplicity(index: Iterable[str]) -> int:
    """Number of ordered index tuples giving the same multiset: |K|! / prod m_k!."""
    c = Counter(index)
    n = factorial(sum(c.values()))
    for m in c.values():
        n //= factorial(m)
    return n


def sub_multisets(index: Iterable[str]):
    c = sorted(Counter(index).items())
    names = [n for n, _ in c]
    for counts in itertools.product(*[range(m + 1) for _, m in c]):
        yield tuple(sorted(itertools.chain.from_iterable([n] * k for n, k in zip(names, counts))))


def _remove(index: tuple, sub: Iterable[str]) -> tuple | None:
    rest = list(index)
    for s in sub:
        if s not in rest:
            return None
        rest.remove(s)
    return tuple(rest)


# ---------------------------------------------------------------- Euler operators

def euler_lagrange(e: Expr, alpha: str, rules: NonlocalRules = EMPTY_RULES) -> Expr:
    """delta e / delta u^alpha summed once per canonical jet coordinate."""
    out = ZERO
    for j in sorted(e.jets(alpha), key=lambda a: a.key):
        d = e.diff(j)
        if not d.terms:
            continue
        t = total_derivative_multi(d, j.index, rules)
        out = out + (t if j.order % 2 == 0 else -t)
    return out


def higher_euler(e: Expr, alpha: str, index: Iterable[str], rules: NonlocalRules = EMPTY_RULES) -> Expr:
    """Euler operator with respect to u^alpha_I.

    Sum over jets u_{I+K} present in e of (-1)^|K| ord(K)/ord(I+K) D_K(de/du_{I+K}),
    ord being the multiset multiplicity.  The weights make the Noether flux below
    satisfy the operator identity over canonical (symmetric) jet coordinates.
    """
    index = tuple(sorted(index))
    out = ZERO
    for j in sorted(e.jets(alpha), key=lambda a: a.key):
        k = _remove(j.index, index)
        if k is None:
            continue
        d = e.diff(j)
        if not d.terms:
            continue
        w = Expr.const(multiplicity(k)) / multiplicity(j.index)
        t = total_derivative_multi(d, k, rules) * w
        out = out + (t if len(k) % 2 == 0 else -t)
    return out


def characteristic(g: Generator, alpha: str) -> Expr:
    """W^alpha = eta^alpha - xi^j u^alpha_j."""
    w = g.eta.get(alpha, ZERO)
    for i, xi in g.xi.items():
        if xi.terms:
            w = w - xi * Expr.atom(Jet(alpha, (i,)))
    return w


def _dep(g: Generator, L: Expr, dep) -> list:
    if dep is not None:
        return list(dep)
    if g.eta:
        return sorted(g.eta)
    return sorted({j.var for j in L.jets()})


def noether_flux(L: Expr, g: Generator, i: str, include_xi_L: bool = False,
                 rules: NonlocalRules = EMPTY_RULES, dep: Iterable[str] | None = None) -> Expr:
    """C^i = [xi^i L] + sum_alpha sum_J ord(J) D_J(W^alpha) * higher_euler(L, alpha, {i}+J)."""
    dep = _dep(g, L, dep)
    out = g.xi.get(i, ZERO) * L if include_xi_L else ZERO
    for alpha in dep:
        jets = [j for j in L.jets(alpha) if i in j.index]
        if not jets:
            continue
        w = characteristic(g, alpha)
        if not w.terms:
            continue
        seen = set()
        for j in jets:
            rest = _remove(j.index, (i,))
            for sub in sub_multisets(rest):
                seen.add(sub)
        for sub in sorted(seen, key=lambda s: (len(s), s)):
            he = higher_euler(L, alpha, (i,) + sub, rules)
            if not he.terms:
                continue
            dw = total_derivative_multi(w, sub, rules)
            out = out + dw * he * multiplicity(sub)
    return out


def prolonged_action(g: Generator, L: Expr, rules: NonlocalRules = EMPTY_RULES,
                     dep: Iterable[str] | None = None) -> Expr:
    """X(L) via the characteristic form: sum D_K(W) dL/du_K + xi^i D_i L."""
    dep = _dep(g, L, dep)
    out = ZERO
    for alpha in dep:
        w = characteristic(g, alpha)
        for j in L.jets(alpha):
            d = L.diff(j)
            if d.terms:
                out = out + total_derivative_multi(w, j.index, rules) * d
    for i, xi in g.xi.items():
        if xi.terms:
            out = out + xi * total_derivative(L, i, rules)
    return out


def is_divergence(f: Expr, dep: Iterable[str] | None = None, rules: NonlocalRules = EMPTY_RULES) -> bool:
    """True when every Euler-Lagrange derivative of f vanishes (randomized test)."""
    dep = sorted({j.var for j in f.jets()}) if dep is None else list(dep)
    return all(is_zero(euler_lagrange(f, a, rules)) for a in dep)


def divergence(components: Mapping[str, Expr], rules: NonlocalRules = EMPTY_RULES) -> Expr:
    out = ZERO
    for i, c in components.items():
        out = out + total_derivative(c, i, rules)
    return out
