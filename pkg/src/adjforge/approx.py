"""First-order perturbation layer: expressions modulo eps^2, approximately
adjoint equations, approximate self-adjointness and conservation laws."""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as X
from .adjoint import ProblemSystem, adjoint_system, formal_lagrangian
from .calculus import Generator, noether_flux, total_derivative
from .conslaw import ConservedVector, linear_combination, reduce_triviality
from .errors import InputError
from .expr import ZERO, Expr, Func, Parameter
from .selfadjoint import Reducer, Substitution, on_shell_reduce, substitute_adjoint, vanishes


@dataclass(frozen=True)
class EpsExpr:
    """zeroth + eps*first, arithmetic modulo eps^2."""

    zeroth: Expr = ZERO
    first: Expr = ZERO

    def __add__(self, other):
        other = _lift(other)
        return EpsExpr(self.zeroth + other.zeroth, self.first + other.first)

    __radd__ = __add__

    def __neg__(self):
        return EpsExpr(-self.zeroth, -self.first)

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        return EpsExpr(self.zeroth * other.zeroth,
                       self.zeroth * other.first + self.first * other.zeroth)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not self.zeroth.terms and not self.first.terms

    def vanishes(self) -> bool:
        return vanishes(self.zeroth) and vanishes(self.first)

    def to_expr(self, eps: Parameter | None) -> Expr:
        if eps is None:
            return self.zeroth + self.first if self.first.terms else self.zeroth
        return self.zeroth + Expr.atom(eps) * self.first

    def text(self) -> str:
        return f"{X.to_text(self.zeroth)} + eps*({X.to_text(self.first)})"


def _lift(x) -> EpsExpr:
    if isinstance(x, EpsExpr):
        return x
    if isinstance(x, Expr):
        return EpsExpr(x, ZERO)
    return EpsExpr(Expr.const(x), ZERO)


def _eps(sys_or_eps) -> Parameter | None:
    if isinstance(sys_or_eps, Parameter):
        return sys_or_eps
    return sys_or_eps.small_parameter


def eps_truncate(e: Expr, eps: Parameter) -> EpsExpr:
    """Split e by powers of eps and drop eps^2 and higher."""
    if eps is None:
        return EpsExpr(e, ZERO)
    for a in e.deep_atoms():
        if a.composite and any(x.contains(eps) for x in a.inner()):
            raise InputError(f"{eps.name} occurs inside {a.text()}; expression is not polynomial in it")
    parts = e.collect(lambda a: a == eps)
    zeroth, first = ZERO, ZERO
    for key, c in parts.items():
        if not key:
            zeroth = zeroth + c
            continue
        (_, k), = key
        if k < 0 or k != int(k):
            raise InputError(f"{eps.name}^{k} is not a polynomial power")
        if k == 1:
            first = first + c
    return EpsExpr(zeroth, first)


def zeroth_system(sys: ProblemSystem) -> ProblemSystem:
    """The unperturbed system eps = 0."""
    eps = _eps(sys)
    if eps is None:
        return sys
    return sys.replace(equations=[X.substitute(F, {eps: ZERO}) for F in sys.equations])


def _truncating_reducer(sys: ProblemSystem) -> Reducer:
    eps = _eps(sys)
    r = getattr(sys, "_eps_reducer", None)
    if r is None:
        def post(e):
            return eps_truncate(e, eps).to_expr(eps) if eps is not None else e
        r = Reducer(sys, post)
        sys._eps_reducer = r
    return r


def reduce_eps(e: Expr, sys: ProblemSystem) -> EpsExpr:
    """On-shell reduction with the full perturbed equations, truncated at first order."""
    eps = _eps(sys)
    if eps is None:
        return EpsExpr(on_shell_reduce(e, sys), ZERO)
    r = _truncating_reducer(sys).reduce(eps_truncate(e, eps).to_expr(eps))
    return eps_truncate(r, eps)


def approx_adjoint(sys: ProblemSystem) -> list:
    """Exact adjoint with the eps-terms reduced by the unperturbed equations."""
    eps = _eps(sys)
    sys0 = zeroth_system(sys)
    out = []
    for Fs in adjoint_system(sys):
        t = eps_truncate(Fs, eps)
        out.append(EpsExpr(t.zeroth, on_shell_reduce(t.first, sys0) if eps is not None else ZERO))
    return out


@dataclass
class ApproxVerdict:
    passed: bool
    residual: list
    substitution: Substitution | None = None


def approx_verify_substitution(sys: ProblemSystem, sub: Substitution,
                               allow_trivial: bool = False) -> ApproxVerdict:
    """F*|_{v = phi} vanishes on the perturbed equations through first order in eps."""
    eps = _eps(sys)
    zeroth = {v: eps_truncate(e, eps).zeroth for v, e in sub.mapping.items()}
    if not allow_trivial and not any(e.terms for e in zeroth.values()):
        raise InputError("the unperturbed part of the substitution vanishes")
    residual = [reduce_eps(substitute_adjoint(Fs, sub, sys), sys) for Fs in adjoint_system(sys)]
    return ApproxVerdict(all(r.vanishes() for r in residual), residual, sub)


@dataclass
class GEquation:
    """lhs(g) = rhs: the linear equation the eps-correction g must satisfy."""

    lhs: Expr
    rhs: Expr
    g: Func

    def defect(self) -> Expr:
        return self.rhs - self.lhs


def _g_atom(sys: ProblemSystem, name: str = "g") -> Func:
    x = sys.indep[0]
    y = sys.dep[0]
    args = (X.indep(x), X.jet(y), X.jet(y, x))
    return Func(name, args)


def _has_g(m: tuple, name: str) -> bool:
    return any(isinstance(a, Func) and a.name == name for a in Expr({m: 1}).deep_atoms())


def approx_determining_g(sys: ProblemSystem, f: Expr, name: str = "g") -> GEquation:
    """Equation for g in z = f(x, y) + eps*g(x, y, y') for one second-order ODE.

    lhs collects the terms of the first-order residual containing g, rhs is
    minus the rest.
    """
    if len(sys.indep) != 1 or len(sys.dep) != 1:
        raise InputError("the g-equation is built for a single ODE")
    eps = _eps(sys)
    y = sys.dep[0]
    for j in f.jets():
        if j.var == y and j.order > 0:
            raise InputError("f may depend on x and y only")
    g = _g_atom(sys, name)
    z = sys.adjoint_vars[0]
    phi = f + Expr.atom(eps) * Expr.atom(g)
    v = approx_verify_substitution(sys, Substitution({z: phi}, "differential", 1), allow_trivial=True)
    r = v.residual[0]
    if not vanishes(r.zeroth):
        raise InputError("f does not solve the unperturbed adjoint equation")
    lhs = Expr({m: c for m, c in r.first.terms.items() if _has_g(m, name)})
    rhs = -(r.first - lhs)
    return GEquation(lhs, rhs, g)


def g_operator(sys: ProblemSystem, g: Func) -> Expr:
    """g + D_x^2(g) with y'' eliminated by the unperturbed equation."""
    x = sys.indep[0]
    sys0 = zeroth_system(sys)
    ge = Expr.atom(g)
    d1 = on_shell_reduce(total_derivative(ge, x, sys.rules), sys0)
    d2 = on_shell_reduce(total_derivative(d1, x, sys.rules), sys0)
    return ge + d2


@dataclass
class ApproxVector:
    components: dict
    residual: EpsExpr
    passed: bool
    provenance: tuple = ()

    def as_vector(self, eps: Parameter) -> ConservedVector:
        return ConservedVector({i: c.to_expr(eps) for i, c in self.components.items()},
                               provenance=self.provenance)


def approx_conserved_vector(sys: ProblemSystem, sub: Substitution, g: Generator,
                            include_xi_L: bool = False) -> ApproxVector:
    """Flux with v eliminated and reduced on the perturbed equations, kept to first order."""
    eps = _eps(sys)
    L = formal_lagrangian(sys)
    comps = {}
    for i in sys.indep:
        c = noether_flux(L, g, i, include_xi_L, sys.rules, dep=sys.dep)
        comps[i] = reduce_eps(substitute_adjoint(c, sub, sys), sys)
    res = approx_residual(sys, comps)
    return ApproxVector(comps, res, res.vanishes(), (g.name, sub.name))


def approx_residual(sys: ProblemSystem, comps: dict) -> EpsExpr:
    eps = _eps(sys)
    div = ZERO
    for i, c in comps.items():
        e = c.to_expr(eps) if isinstance(c, EpsExpr) else c
        div = div + total_derivative(e, i, sys.rules)
    return reduce_eps(div, sys)


def approx_reduce(sys: ProblemSystem, comps: dict) -> dict:
    """Triviality reduction of an eps-valued vector, truncated at first order."""
    eps = _eps(sys)
    cv = ConservedVector({i: (c.to_expr(eps) if isinstance(c, EpsExpr) else c) for i, c in comps.items()})
    red = reduce_triviality(cv, sys)
    return {i: eps_truncate(c, eps) for i, c in red.components.items()}


def approx_equivalent(sys: ProblemSystem, comps: dict, expected: dict):
    """Rational r with comps ~ r*expected modulo trivial vectors and eps^2, or None."""
    eps = _eps(sys)
    a = ConservedVector({i: (c.to_expr(eps) if isinstance(c, EpsExpr) else c) for i, c in comps.items()})
    b = ConservedVector({i: (c.to_expr(eps) if isinstance(c, EpsExpr) else c) for i, c in expected.items()})
    sys0 = zeroth_system(sys)
    coef = linear_combination(ConservedVector({i: eps_truncate(c, eps).zeroth for i, c in a.components.items()}),
                              [ConservedVector({i: eps_truncate(c, eps).zeroth for i, c in b.components.items()})],
                              sys0)
    if coef is None or not coef[0].terms or not coef[0].is_const():
        return None
    r = coef[0]
    diff = ConservedVector({i: a[i] - r * b[i] for i in sys.indep})
    red = reduce_triviality(diff, sys)
    for c in red.components.values():
        if not eps_truncate(c, eps).vanishes():
            return None
    return r.const_value()


__all__ = [
    "ApproxVector", "ApproxVerdict", "EpsExpr", "GEquation", "approx_adjoint",
    "approx_conserved_vector", "approx_determining_g", "approx_equivalent", "approx_reduce",
    "approx_residual", "approx_verify_substitution", "eps_truncate", "g_operator",
    "reduce_eps", "zeroth_system",
]
