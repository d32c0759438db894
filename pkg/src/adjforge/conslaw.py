"""Conserved vectors from symmetries and substitutions, triviality reduction,
verification, the direct multiplier test and differential constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import expr as X
from .adjoint import ProblemSystem, formal_lagrangian
from .calculus import Generator, euler_lagrange, noether_flux, total_derivative, total_derivative_multi
from .errors import AdjforgeError, EvaluationSingularity, InputError
from .expr import ZERO, AuxVar, Expr, Func, IndepVar, Jet, Parameter, is_zero
from .selfadjoint import (
    Substitution,
    characteristic_multipliers,
    extract_multipliers,
    on_shell_reduce,
    split_by_coefficients,
    substitute_adjoint,
    vanishes,
    verify_substitution,
)


class SubstitutionRejected(AdjforgeError):
    """The substitution does not solve the adjoint system on-shell."""


@dataclass
class Certificate:
    residual: Expr
    passed: bool
    multipliers: dict | None = None
    characteristic: list | None = None


@dataclass
class ConservedVector:
    components: dict
    certificate: Certificate | None = None
    provenance: tuple | str = "direct"
    trivial: bool = False

    def __getitem__(self, i):
        return self.components.get(i, ZERO)

    def is_zero(self) -> bool:
        return all(not c.terms for c in self.components.values())

    def text(self) -> dict:
        return {i: X.to_text(c) for i, c in self.components.items()}


def _vector(sys: ProblemSystem, comps: dict, provenance="direct") -> ConservedVector:
    return ConservedVector({i: comps.get(i, ZERO) for i in sys.indep}, provenance=provenance)


# ---------------------------------------------------------------- construction

def conserved_vector(sys: ProblemSystem, sub: Substitution, g: Generator,
                     include_xi_L: bool = False, force: bool = False) -> ConservedVector:
    """C^i = N^i(L) with the adjoint variables eliminated through ``sub``."""
    if not force:
        verdict = verify_substitution(sys, sub)
        if not verdict.passed:
            raise SubstitutionRejected("substitution does not solve the adjoint system")
    L = formal_lagrangian(sys)
    comps = {}
    for i in sys.indep:
        c = noether_flux(L, g, i, include_xi_L, sys.rules, dep=sys.dep)
        comps[i] = substitute_adjoint(c, sub, sys)
    return _vector(sys, comps, (g.name, sub.name))


def noether_vector(sys: ProblemSystem, L: Expr, g: Generator, include_xi_L: bool = True) -> ConservedVector:
    """Classical-Lagrangian route: the same flux operator applied to a true Lagrangian."""
    comps = {i: noether_flux(L, g, i, include_xi_L, sys.rules, dep=sys.dep) for i in sys.indep}
    return _vector(sys, comps, (g.name, "noether"))


# ---------------------------------------------------------------- antiderivatives

def _free_of(e: Expr, a) -> bool:
    return not e.contains(a)


def _integrate_monomial(m: tuple, c: Fraction, var) -> Expr | None:
    """Antiderivative of one monomial in ``var`` (other atoms held fixed), or None."""
    direct = [(a, e) for a, e in m if a == var]
    nested = [(a, e) for a, e in m if a != var and a.composite and any(x.contains(var) for x in a.inner())]
    rest = Expr({tuple(p for p in m if p[0] != var and p not in nested): c})
    if direct and nested:
        return None
    if direct:
        e = direct[0][1]
        if e == -1:
            return None
        return rest * Expr.atom(var, e + 1) / (e + 1)
    if not nested:
        return rest * Expr.atom(var)
    if len(nested) != 1 or nested[0][1] != 1:
        return None
    f = nested[0][0]
    if not isinstance(f, Func):
        return None
    if f.builtin:
        arg = f.args[0]
        k = arg.diff(var)
        if not k.terms or k.contains(var) or f.name not in ("sin", "cos", "exp"):
            return None
        if f.name == "sin":
            return -rest * X.cos(arg) / k
        if f.name == "cos":
            return rest * X.sin(arg) / k
        return rest * Expr.atom(f) / k
    slots = [s for s, a in enumerate(f.args) if a.contains(var)]
    if len(slots) != 1 or f.args[slots[0]] != Expr.atom(var) or f.derivs[slots[0]] == 0:
        return None
    derivs = list(f.derivs)
    derivs[slots[0]] -= 1
    return rest * Expr.atom(Func(f.name, f.args, tuple(derivs)))


def antiderivative(e: Expr, var) -> tuple[Expr, Expr]:
    """Split e = d/dvar(H) + failed, integrating monomial by monomial."""
    H, failed = ZERO, {}
    for m, c in e.terms.items():
        h = _integrate_monomial(m, c, var)
        if h is None:
            failed[m] = c
        else:
            H = H + h
    return H, Expr(failed)


def _is_pure(m: tuple) -> bool:
    """Monomial built only from independent variables, parameters and functions of those."""
    e = Expr({m: 1})
    return not any(isinstance(a, (Jet, AuxVar)) or (isinstance(a, Func) and not a.builtin)
                   for a in e.deep_atoms())


def _without_index(J: Jet, j: str) -> Jet:
    idx = list(J.index)
    idx.remove(j)
    return Jet(J.var, idx)


def integrate_along(e: Expr, j: str, sys: ProblemSystem, max_steps: int = 80) -> tuple[Expr, Expr]:
    """Find H, R with e = D_j(H) + R on the solutions of sys.

    The highest jet in the direction j must occur linearly with a coefficient
    free of equally high jets; it is then integrated against the jet one step
    lower.  Anything that fails the test is passed to R unchanged.
    """
    todo = on_shell_reduce(e, sys)
    H = ZERO
    rest = ZERO
    for _ in range(max_steps):
        if not todo.terms:
            break
        jets = [a for a in todo.deep_atoms() if isinstance(a, Jet) and j in a.index]
        if not jets:
            pure = Expr({m: c for m, c in todo.terms.items()
                         if _is_pure(m) and Expr({m: 1}).contains(IndepVar(j))})
            h, _ = antiderivative(pure, IndepVar(j))
            rest = rest + todo - total_derivative(h, j, sys.rules)
            H = H + h
            todo = ZERO
            break
        J = max(jets, key=lambda a: (a.index.count(j), a.order, a.key))
        top = J.index.count(j)
        K = _without_index(J, j)
        good, bad = {}, {}
        for m, c in todo.terms.items():
            if not Expr({m: 1}).contains(J):
                continue
            mono = Expr({m: c})
            coef = mono.coefficient(J, 1)
            ok = (mono.degree(J) == 1 and coef.terms and not coef.contains(J)
                  and not any(isinstance(a, Jet) and a.index.count(j) >= top for a in coef.deep_atoms()))
            (good if ok else bad)[m] = c
        bad = Expr(bad)
        a = Expr(good).coefficient(J, 1)
        h, failed = antiderivative(a, K)
        bad = bad + failed * Expr.atom(J)
        rest = rest + bad
        todo = todo - bad
        if h.terms:
            H = H + h
            todo = on_shell_reduce(todo - total_derivative(h, j, sys.rules), sys)
    else:
        rest = rest + todo
        todo = ZERO
    return H, on_shell_reduce(rest + todo, sys)


# ---------------------------------------------------------------- triviality

def _drop_constants(c: Expr, i: str) -> Expr:
    """Remove summands with identically vanishing D_i: pure functions free of x^i."""
    keep = {m: k for m, k in c.terms.items()
            if not (_is_pure(m) and not Expr({m: 1}).contains(IndepVar(i)))}
    return Expr(keep)


def reduce_triviality(cv: ConservedVector, sys: ProblemSystem, passes: int = 5) -> ConservedVector:
    """Normal form modulo trivial conserved vectors.

    Components are reduced on-shell; then each component gives up its parts of
    the form D_j(H) for later directions j, which reappear in C^j as D_i(H).
    """
    order = list(sys.indep)
    comps = {i: _drop_constants(on_shell_reduce(cv[i], sys), i) for i in order}
    for _ in range(passes):
        changed = False
        for a, i in enumerate(order):
            for j in order[a + 1:]:
                if not comps[i].terms:
                    continue
                H, R = integrate_along(comps[i], j, sys)
                if not H.terms:
                    continue
                comps[i] = _drop_constants(R, i)
                comps[j] = _drop_constants(on_shell_reduce(comps[j] + total_derivative(H, i, sys.rules), sys), j)
                changed = True
        if not changed:
            break
    comps = {i: (ZERO if c.terms and vanishes(c) else c) for i, c in comps.items()}
    out = ConservedVector(comps, cv.certificate, cv.provenance)
    out.trivial = out.is_zero()
    return out


# ---------------------------------------------------------------- verification

def divergence(cv: ConservedVector, sys: ProblemSystem) -> Expr:
    out = ZERO
    for i, c in cv.components.items():
        out = out + total_derivative(c, i, sys.rules)
    return out


def verify_conservation(cv: ConservedVector, sys: ProblemSystem) -> Certificate:
    """D_i C^i reduced on-shell, plus the multipliers of the unreduced divergence when they can be read off."""
    div = divergence(cv, sys)
    residual = on_shell_reduce(div, sys)
    passed = vanishes(residual)
    cert = Certificate(residual, passed)
    if passed and div.terms:
        mu = extract_multipliers(div, sys)
        if mu is not None:
            cert.multipliers = mu
            cert.characteristic = characteristic_multipliers(mu, sys)
    cv.certificate = cert
    return cert


def direct_multiplier_test(sys: ProblemSystem, mu: list) -> bool:
    """True iff every Euler-Lagrange derivative of sum mu F vanishes on the solutions."""
    if len(mu) != len(sys.equations):
        raise InputError(f"{len(mu)} multipliers for {len(sys.equations)} equations")
    total = ZERO
    for m, F in zip(mu, sys.equations):
        total = total + m * F
    if not total.terms:
        return True
    return all(vanishes(on_shell_reduce(euler_lagrange(total, a, sys.rules), sys)) for a in sys.dep)


def direct_residuals(sys: ProblemSystem, mu: list) -> list:
    total = ZERO
    for m, F in zip(mu, sys.equations):
        total = total + m * F
    return [on_shell_reduce(euler_lagrange(total, a, sys.rules), sys) for a in sys.dep]


# ---------------------------------------------------------------- comparison

def _values(exprs: list, rng, n: int = 12):
    leaves = set()
    for e in exprs:
        leaves |= e.leaves()
    for _ in range(8):
        env = X.random_env(leaves, n, rng)
        rows, ok = [], True
        for e in exprs:
            val, _, bad = X.evaluate(e, env) if e.terms else (np.zeros(n), None, np.zeros(n, dtype=bool))
            if bad.any():
                ok = False
                break
            rows.append(val)
        if ok:
            return rows
    raise EvaluationSingularity("no regular sample points")


def _rational(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10_000)


def linear_combination(cv: ConservedVector, basis: list, sys: ProblemSystem):
    """Coefficients c_k with cv - sum c_k basis_k trivial, or None.

    The c_k are rational, or linear in the undetermined coefficients when cv
    carries them.  Candidates come from a least-squares fit and are accepted
    only after an exact triviality check.
    """
    order = list(sys.indep)
    red = reduce_triviality(cv, sys)
    rb = [reduce_triviality(b, sys) for b in basis]
    parts = {}
    for i in order:
        for mono, c in red[i].collect(lambda a: isinstance(a, Parameter) and a.role == X.COEF).items():
            parts.setdefault(mono, {})[i] = c
    if not parts:
        parts = {(): {}}
    rng = np.random.default_rng(X.default_seed() or None)
    coeffs = [ZERO] * len(basis)
    for mono, comp in parts.items():
        exprs = [comp.get(i, ZERO) for i in order] + [b[i] for b in rb for i in order]
        vals = _values(exprs, rng)
        k = len(order)
        target = np.concatenate(vals[:k])
        A = np.stack([np.concatenate(vals[k * (q + 1):k * (q + 2)]) for q in range(len(basis))], axis=1)
        sol, *_ = np.linalg.lstsq(A, target, rcond=None)
        m = Expr({mono: 1})
        for q, s in enumerate(sol):
            r = _rational(float(s))
            if r:
                coeffs[q] = coeffs[q] + m * Expr.const(r)
    diff = {i: red[i] for i in order}
    for c, b in zip(coeffs, rb):
        for i in order:
            diff[i] = diff[i] - c * b[i]
    check = reduce_triviality(ConservedVector(diff), sys)
    if all(vanishes(c) for c in check.components.values()):
        return coeffs
    return None


def equivalent(cv: ConservedVector, expected: ConservedVector, sys: ProblemSystem):
    """Nonzero factor r with cv ~ r*expected modulo trivial vectors, or None."""
    c = linear_combination(cv, [expected], sys)
    if c is None or not c[0].terms:
        return None
    return c[0]


def as_vector(sys: ProblemSystem, comps: dict, provenance="given") -> ConservedVector:
    return _vector(sys, comps, provenance)


# ---------------------------------------------------------------- differential constraints

@dataclass
class ConstraintReport:
    system: ProblemSystem
    constraints: list = field(default_factory=list)
    expected_rank: int = 0
    note: str = ""

    @property
    def equations(self) -> list:
        return list(self.system.equations) + list(self.constraints)


def emit_constraints(sys: ProblemSystem, cv: ConservedVector) -> ConstraintReport:
    """D_i(C^i) = 0 for each i separately, appended to the system."""
    cons = []
    for i, c in cv.components.items():
        d = total_derivative(c, i, sys.rules)
        if d.terms:
            cons.append(d)
    n = len(cons)
    m = len(sys.equations)
    rank = m + n - 1 if n else m
    note = "" if not n else (f"{m} equations + {n} constraints; one constraint follows from the others "
                             f"on solutions, leaving {rank} independent equations")
    return ConstraintReport(sys, cons, rank, note)


def plug_solution(e: Expr, solution: dict, sys: ProblemSystem) -> Expr:
    """Replace every jet of a solved variable by the matching partial derivative of its formula."""
    bind = {}
    for a in e.deep_atoms():
        if isinstance(a, Jet) and a.var in solution:
            bind[a] = total_derivative_multi(solution[a.var], a.index, sys.rules)
    return X.substitute(e, bind, check_cycles=False) if bind else e


def check_solution(sys: ProblemSystem, solution: dict, constraints: list = ()) -> list:
    """Residuals of the system and the constraints at an explicit solution; all zero on success."""
    out = []
    for e in list(sys.equations) + list(constraints):
        out.append(plug_solution(e, solution, sys))
    return out


def solution_passes(sys: ProblemSystem, solution: dict, constraints: list = ()) -> bool:
    return all(not r.terms or is_zero(r) for r in check_solution(sys, solution, constraints))


__all__ = [
    "Certificate", "ConservedVector", "ConstraintReport", "SubstitutionRejected",
    "antiderivative", "as_vector", "check_solution", "conserved_vector", "direct_multiplier_test",
    "direct_residuals", "divergence", "emit_constraints", "equivalent", "integrate_along",
    "linear_combination", "noether_vector", "plug_solution", "reduce_triviality",
    "solution_passes", "split_by_coefficients", "verify_conservation",
]
