"""Formal Lagrangians, adjoint systems and the linear-operator checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .calculus import (
    EMPTY_RULES,
    NonlocalRules,
    euler_lagrange,
    is_divergence,
    total_derivative,
    total_derivative_multi,
)
from .errors import NotLinear
from .expr import ZERO, Expr, Jet, Space


@dataclass
class ProblemSystem:
    space: Space
    equations: list
    leading: list
    rules: NonlocalRules = EMPTY_RULES
    names: list = field(default_factory=list)

    @property
    def indep(self) -> tuple:
        return self.space.indep

    @property
    def dep(self) -> tuple:
        return self.space.dep

    @property
    def adjoint_vars(self) -> tuple:
        return self.space.adjoint

    @property
    def small_parameter(self):
        return self.space.small_parameter()

    @property
    def eps_order(self) -> int:
        eps = self.small_parameter
        if eps is None:
            return 0
        return int(any(e.contains(eps) for e in self.equations))

    def replace(self, equations=None, leading=None) -> "ProblemSystem":
        return ProblemSystem(self.space,
                             list(self.equations if equations is None else equations),
                             list(self.leading if leading is None else leading),
                             self.rules, list(self.names))


def formal_lagrangian(sys: ProblemSystem) -> Expr:
    """L = sum v^k F_k."""
    L = ZERO
    for v, F in zip(sys.adjoint_vars, sys.equations):
        L = L + Expr.atom(Jet(v)) * F
    return L


def adjoint_system(sys: ProblemSystem) -> list:
    """F*_alpha = delta L / delta u^alpha, one per dependent variable."""
    L = formal_lagrangian(sys)
    return [euler_lagrange(L, a, sys.rules) for a in sys.dep]


def _check_linear(F: Expr, dep) -> None:
    for m in F.terms:
        deg = 0
        for a, e in m:
            if isinstance(a, Jet) and a.var in dep:
                deg += e
            elif a.composite and any(j.var in dep for x in a.inner() for j in x.jets()):
                raise NotLinear(f"dependent variable inside {a.text()}")
        if deg != 1:
            raise NotLinear("equation is not linear homogeneous in the dependent variables")


@dataclass
class LinearAdjointReport:
    passed: bool
    psi: dict | None = None
    psi_identity: bool | None = None


def linear_adjoint_consistency(sys: ProblemSystem) -> LinearAdjointReport:
    """Check sum v F[u] - sum u F*[v] is a divergence; emit the flux pair for one second-order equation."""
    for F in sys.equations:
        _check_linear(F, sys.dep)
    adj = adjoint_system(sys)
    lhs = formal_lagrangian(sys)
    for u, Fs in zip(sys.dep, adj):
        lhs = lhs - Expr.atom(Jet(u)) * Fs
    passed = is_divergence(lhs, list(sys.dep) + list(sys.adjoint_vars), sys.rules)
    report = LinearAdjointReport(passed)
    if len(sys.equations) == 1 and len(sys.dep) == 1:
        F = sys.equations[0]
        if max((j.order for j in F.jets(sys.dep[0])), default=0) <= 2:
            psi = second_order_flux(F, sys.dep[0], sys.adjoint_vars[0], sys.indep)
            div = ZERO
            for i, p in psi.items():
                div = div + total_derivative(p, i, sys.rules)
            report.psi = psi
            report.psi_identity = not (lhs - div).terms
    return report


def second_order_flux(F: Expr, u: str, v: str, indep) -> dict:
    """psi^i = a^{ij}(v u_j - u v_j) + (b^i - D_j a^{ij}) u v for L[u] = a^{ij}u_ij + b^i u_i + c u."""
    def a(i, j):
        c = F.coefficient(Jet(u, (i, j)))
        return c if i == j else c / 2

    uu, vv = Expr.atom(Jet(u)), Expr.atom(Jet(v))
    psi = {}
    for i in indep:
        p = F.coefficient(Jet(u, (i,))) * uu * vv
        for j in indep:
            aij = a(i, j)
            if not aij.terms:
                continue
            p = p + aij * (vv * Expr.atom(Jet(u, (j,))) - uu * Expr.atom(Jet(v, (j,))))
            p = p - total_derivative(aij, j) * uu * vv
        psi[i] = p
    return psi


def linearization(F: Expr, u: str, w: str, rules: NonlocalRules = EMPTY_RULES) -> Expr:
    """F-hat[w] = sum_K dF/du_K D_K(w): X(F) with eta = w, xi = 0."""
    out = ZERO
    ww = Expr.atom(Jet(w))
    for j in F.jets(u):
        d = F.diff(j)
        if d.terms:
            out = out + d * total_derivative_multi(ww, j.index, rules)
    return out


def fresh_name(space: Space, base: str = "w") -> str:
    taken = space.names()
    if base not in taken:
        return base
    k = 1
    while f"{base}{k}" in taken:
        k += 1
    return f"{base}{k}"


@dataclass
class SecondAdjointReport:
    second: Expr
    linearized: Expr
    equal: bool
    w: str


def second_adjoint(sys: ProblemSystem) -> SecondAdjointReport:
    """(F*)* via the adjoint variable w of the adjoint equation, compared with the linearization of F."""
    u, v = sys.dep[0], sys.adjoint_vars[0]
    w = fresh_name(sys.space)
    Fs = adjoint_system(sys)[0]
    second = euler_lagrange(Expr.atom(Jet(w)) * Fs, v, sys.rules)
    lin = linearization(sys.equations[0], u, w, sys.rules)
    return SecondAdjointReport(second, lin, second == lin, w)


def proportional(a: Expr, b: Expr):
    """Rational r with a = r*b, or None."""
    if not a.terms and not b.terms:
        return Fraction(1)
    if not a.terms or not b.terms or len(a.terms) != len(b.terms):
        return None
    ratio = None
    for m, c in a.terms.items():
        d = b.terms.get(m)
        if d is None:
            return None
        r = c / d
        if ratio is None:
            ratio = r
        elif r != ratio:
            return None
    return ratio
