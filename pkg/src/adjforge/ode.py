"""Linear ordinary differential operators: adjoint, bilinear concomitant,
integrating factors and reduction of order."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr as X
from .calculus import EMPTY_RULES, NonlocalRules, euler_lagrange, is_divergence, total_derivative
from .conslaw import antiderivative
from .errors import NotIntegratingFactor, NotLinear
from .expr import ZERO, AuxVar, Expr, IndepVar, Jet, is_zero


@dataclass
class LinearODE:
    """L[y] = a_0 y^(s) + a_1 y^(s-1) + ... + a_s y, equation L[y] = rhs."""

    coeffs: list
    x: str = "x"
    y: str = "y"
    rhs: Expr = ZERO
    rules: NonlocalRules = EMPTY_RULES

    def __post_init__(self):
        if len(self.coeffs) < 2:
            raise NotLinear("order must be at least 1")
        if not self.coeffs[0].terms:
            raise NotLinear("leading coefficient a_0 vanishes")
        for a in self.coeffs:
            if a.jets():
                raise NotLinear("coefficients must not contain derivatives")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def jet(self, k: int, var: str | None = None) -> Expr:
        return Expr.atom(Jet(var or self.y, (self.x,) * k))

    def apply(self, y: Expr | str | None = None) -> Expr:
        """L applied to a dependent variable name or to an explicit expression."""
        s = self.order
        out = ZERO
        for k, a in enumerate(self.coeffs):
            n = s - k
            if isinstance(y, Expr):
                term = y
                for _ in range(n):
                    term = total_derivative(term, self.x, self.rules)
            else:
                term = self.jet(n, y)
            out = out + a * term
        return out

    def operator(self) -> Expr:
        return self.apply()

    @classmethod
    def from_expr(cls, e: Expr, x: str = "x", y: str = "y", rules: NonlocalRules = EMPTY_RULES) -> "LinearODE":
        """Read coefficients off e = L[y] - f(x)."""
        jets = e.jets(y)
        for m in e.terms:
            deg = sum(p for a, p in m if isinstance(a, Jet) and a.var == y)
            if deg > 1:
                raise NotLinear("equation is not linear in the unknown")
        for a in e.deep_atoms():
            if a.composite and any(x_.jets(y) for x_ in a.inner()):
                raise NotLinear(f"unknown inside {a.text()}")
        if not jets:
            raise NotLinear("no derivatives of the unknown")
        s = max(j.order for j in jets)
        coeffs = [e.coefficient(Jet(y, (x,) * (s - k))) for k in range(s + 1)]
        f = e
        for k, a in enumerate(coeffs):
            f = f - a * Expr.atom(Jet(y, (x,) * (s - k)))
        return cls(coeffs, x, y, -f, rules)


def ode_adjoint(ode: LinearODE, z: str = "z") -> LinearODE:
    """L*[z] = delta(z L[y])/delta y, collected as a linear operator in z."""
    adj = euler_lagrange(Expr.atom(Jet(z)) * ode.operator(), ode.y, ode.rules)
    s = ode.order
    coeffs = [adj.coefficient(Jet(z, (ode.x,) * (s - k))) for k in range(s + 1)]
    return LinearODE(coeffs, ode.x, z, ZERO, ode.rules)


def concomitant_psi(ode: LinearODE, z: Expr) -> Expr:
    """psi[y, z] with z L[y] - y L*[z] = D_x(psi).

    psi = sum_k y^(k) [a_{s-1-k} z - (a_{s-2-k} z)' + ... +- (a_0 z)^(s-1-k)].
    """
    s = ode.order
    a = ode.coeffs
    out = ZERO
    for k in range(s):
        bracket = ZERO
        for m in range(s - k):
            t = a[s - 1 - k - m] * z
            for _ in range(m):
                t = total_derivative(t, ode.x, ode.rules)
            bracket = bracket + (t if m % 2 == 0 else -t)
        out = out + ode.jet(k) * bracket
    return out


@dataclass
class FactorCheck:
    divergence_route: bool
    adjoint_route: bool

    @property
    def passed(self) -> bool:
        return self.divergence_route and self.adjoint_route

    @property
    def agree(self) -> bool:
        return self.divergence_route == self.adjoint_route

    def __bool__(self):
        return self.passed


def integrating_factor_check(ode: LinearODE, phi: Expr) -> FactorCheck:
    """phi L[y] is a total derivative, and independently L*[phi] = 0."""
    if not phi.terms:
        raise NotIntegratingFactor("the factor must be nonzero")
    div = is_divergence(phi * ode.operator(), [ode.y], ode.rules)
    adj = ode_adjoint(ode)
    return FactorCheck(div, is_zero(adj.apply(phi)))


@dataclass
class FirstIntegral:
    """psi(x, y, ..., y^(s-1)) = C1 + integral."""

    psi: Expr
    integral: Expr = ZERO
    rules: NonlocalRules = EMPTY_RULES
    constant: str = "C1"
    verified: bool = False
    quadratures: dict = field(default_factory=dict)

    def text(self) -> str:
        rhs = self.constant
        if self.integral.terms:
            rhs += " + " + X.to_text(self.integral)
        return f"{X.to_text(self.psi)} = {rhs}"


def reduce_order(ode: LinearODE, phi: Expr, quadrature_name: str = "I1") -> FirstIntegral:
    """First integral psi = C1 + int(phi f dx) from an integrating factor phi."""
    check = integrating_factor_check(ode, phi)
    if not check.passed:
        raise NotIntegratingFactor("phi L[y] is not a total derivative")
    psi = concomitant_psi(ode, phi)
    g = phi * ode.rhs
    rules = ode.rules
    integral = ZERO
    quads = {}
    if g.terms:
        closed, left = antiderivative(g, IndepVar(ode.x))
        if left.terms or any(not _pure(m) for m in closed.terms):
            closed = ZERO
            table = rules.table()
            table[quadrature_name] = {ode.x: g}
            rules = NonlocalRules.of(table)
            integral = Expr.atom(AuxVar(quadrature_name))
            quads[quadrature_name] = g
        else:
            integral = closed
    # D_x(psi - integral) = phi (L[y] - f)
    lhs = total_derivative(psi - integral, ode.x, rules) - phi * (ode.operator() - ode.rhs)
    ok = is_zero(lhs)
    return FirstIntegral(psi, integral, rules, verified=ok, quadratures=quads)


def _pure(m) -> bool:
    return not any(isinstance(a, (Jet, AuxVar)) for a in Expr({m: 1}).deep_atoms())


def antiderivative_atom(name: str, x: str, integrand: Expr, rules: NonlocalRules = EMPTY_RULES):
    """An opaque quadrature: a new auxiliary variable with d(name)/dx = integrand."""
    table = rules.table()
    table[name] = {x: integrand}
    return Expr.atom(AuxVar(name)), NonlocalRules.of(table)


__all__ = [
    "FactorCheck", "FirstIntegral", "LinearODE", "antiderivative_atom", "concomitant_psi",
    "integrating_factor_check", "ode_adjoint", "reduce_order",
]
