"""Regression suite over the bundled problem documents.

Each check names the fixture it exercises, a descriptive anchor and the
acceptance criterion it belongs to.  Negative controls pass when the engine
reports the expected negative outcome.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import approx as A
from . import conslaw as CL
from . import corpus
from . import expr as X
from . import ode as O
from .adjoint import adjoint_system, proportional
from .calculus import NonlocalRules
from .errors import AdjforgeError
from .expr import Expr, Space
from .parser import load_problem, parse_expr
from .selfadjoint import Substitution, determining_system, solve_determining, verify_substitution


@lru_cache(maxsize=None)
def document(name: str):
    return load_problem(corpus.path(name))


@lru_cache(maxsize=None)
def system(name: str):
    return document(name).system()


def substitution(name: str, sub: str) -> Substitution:
    return document(name).substitution(sub)


def vector(name: str, vec: str) -> CL.ConservedVector:
    return CL.as_vector(system(name), document(name).vectors[vec])


def extended_space(name: str, params=(), aux=(), coef=()) -> Space:
    s = document(name).space
    p = dict(s.params)
    p.update({n: X.GENERIC for n in params})
    p.update({n: X.COEF for n in coef})
    return Space(s.indep, s.dep, s.adjoint, p, tuple(s.aux) + tuple(aux), s.funcs)


@dataclass
class Check:
    name: str
    criterion: int
    fixture: str
    anchor: str
    run: Callable[[], tuple]


@dataclass
class Result:
    name: str
    criterion: int
    fixture: str
    anchor: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  [{self.criterion}] {self.name}: {self.detail}"


# ---------------------------------------------------------------- helpers

def _basis(e: Expr) -> list:
    """Coefficients of the undetermined constants in a solved family."""
    parts = e.collect(lambda a: isinstance(a, X.Parameter) and a.role == X.COEF)
    return [c for k, c in parts.items() if k]


def _rank(exprs: list, seed: int = 7) -> int:
    if not exprs:
        return 0
    rng = np.random.default_rng(seed)
    rows = CL._values(exprs, rng, n=max(24, 3 * len(exprs)))
    return int(np.linalg.matrix_rank(np.array(rows), tol=1e-8))


def span_relation(got: list, expected: list) -> tuple:
    """(rank got, rank expected, rank of the union)."""
    return _rank(got), _rank(expected), _rank(got + expected)


def _family(name: str, cls: str, degree: int) -> list:
    sys = system(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sols = solve_determining(determining_system(sys, cls), degree)
    return sols


def _search(name: str, cls: str, degree: int, expected: list, contains_only: bool = False):
    sols = _family(name, cls, degree)
    doc = document(name)
    exp = [doc.expr(t) for t in expected]
    if not sols:
        return (not exp), "search returned no substitution"
    sub = sols[0]
    if not verify_substitution(system(name), sub).passed:
        return False, "solved family fails verification"
    got = [b for e in sub.mapping.values() for b in _basis(e)]
    rg, re_, ru = span_relation(got, exp)
    text = "; ".join(f"{v} = {X.to_text(e)}" for v, e in sub.mapping.items())
    if contains_only:
        return (ru == rg and re_ == len(exp)), f"{text} (dimension {rg}, expected family dimension {re_})"
    return (rg == re_ == ru), f"{text} (dimension {rg})"


def _adjoint(name: str, expected: list):
    doc = document(name)
    got = adjoint_system(system(name))
    factors = []
    for g, t in zip(got, expected):
        r = proportional(X.canonicalize(g), X.canonicalize(doc.expr(t)))
        if r is None:
            return False, f"{X.to_text(g)} is not proportional to {t}"
        factors.append(str(r))
    return len(got) == len(expected), "factors " + ", ".join(factors)


def _verify(name: str, sub: str, expect: bool = True):
    v = verify_substitution(system(name), substitution(name, sub))
    res = ", ".join(X.to_text(r) for r in v.residual)
    return v.passed == expect, (f"{v.cls}" if v.passed else f"residual {res}")


def _vector_from(name: str, sym: str, sub: str, expected: str, factor=None, trivial: bool = False):
    sys = system(name)
    doc = document(name)
    cv = CL.conserved_vector(sys, substitution(name, sub), doc.symmetries[sym])
    cert = CL.verify_conservation(cv, sys)
    if not cert.passed:
        return False, "constructed vector is not conserved"
    if trivial:
        red = CL.reduce_triviality(cv, sys)
        return red.trivial, "reduces to the zero vector" if red.trivial else f"left {red.text()}"
    r = CL.equivalent(cv, vector(name, expected), sys)
    ok = r is not None and (factor is None or r == Expr.const(factor))
    return ok, f"equivalent with factor {X.to_text(r)}" if r is not None else "not equivalent"


# ---------------------------------------------------------------- criterion 1

ADJOINTS = {
    "heat": ["v_t + v_xx"],
    "kdv": ["v_t - v_xxx - u*v_x"],
    "fornberg_whitham": ["-v_t + v_txx + u*v_xxx - u*v_x - v_x"],
    "sine_gordon": ["v_xy - v*cos(u)"],
    "nonlinear_heat": ["v_t + k(u)*v_xx"],
    "heat_multi": ["v_t + k(u)*(v_xx + v_yy + v_zz)"],
    "aniso_heat2": ["v_t + f(u)*v_xx + g(u)*v_yy"],
    "aniso_heat3": ["v_t + f(u)*v_xx + g(u)*v_yy + h(u)*v_zz"],
    "nonlinear_wave": ["v_tt - k(u)*v_xx"],
    "wave_multi": ["v_tt - k(u)*(v_xx + v_yy + v_zz)"],
    "aniso_wave2": ["v_tt - f(u)*v_xx - g(u)*v_yy"],
    "aniso_wave3": ["v_tt - f(u)*v_xx - g(u)*v_yy - h(u)*v_zz"],
    "kompaneets": ["v_t + x^2*v_xx - x^2*(1 + 2*u)*v_x + 2*(x + 2*x*u - 1)*v"],
    "reaction_diffusion": [
        "A*z_xx + z_t + Psi'{0,1}(u, v)*v_x*w_x - Phi'{1,0}(u, v)*v_x*z_x + Psi(u, v)*w_xx"
        " + z*f'{1,0}(u, v) + w*g'{1,0}(u, v)",
        "B*w_xx + w_t + Phi'{1,0}(u, v)*u_x*z_x - Psi'{0,1}(u, v)*u_x*w_x + Phi(u, v)*z_xx"
        " + z*f'{0,1}(u, v) + w*g'{0,1}(u, v)",
    ],
    "irrigation": ["C(psi)*v_t + K(psi)*(v_xx + v_zz) + K'(psi)*v_z - S'(psi)*v"],
    "gasdynamics": [
        "-U_t - v*U_x - rho*R_x + (1 - gamma)*P*p_x - gamma*p*P_x",
        "-R_t - v*R_x - U*p_x/rho^2",
        "-P_t - U_x/rho + U*rho_x/rho^2 + (gamma - 1)*P*v_x - v*P_x",
    ],
    "chaplygin": [
        "-U_t - v*U_x - rho*R_x + 2*P*p_x + p*P_x",
        "-R_t - v*R_x - U*p_x/rho^2",
        "-P_t - U_x/rho + U*rho_x/rho^2 - 2*P*v_x - v*P_x",
    ],
    "short_pulse": ["v_xt - v - 1/2*u^2*v_xx"],
}


def _criterion1() -> list:
    out = []
    for name, exp in ADJOINTS.items():
        out.append(Check(f"adjoint {name}", 1, name, document(name).meta.get("anchor", name),
                         lambda n=name, e=exp: _adjoint(n, e)))
    out.append(Check("adjoint boussinesq via substitution", 1, "boussinesq", "Boussinesq adjoint structure",
                     lambda: _verify("boussinesq", "self")))
    return out


# ---------------------------------------------------------------- criterion 2

def _criterion2() -> list:
    c = []

    def add(name, fixture, anchor, fn):
        c.append(Check(name, 2, fixture, anchor, fn))

    add("strict kdv", "kdv", "KdV strict self-adjointness", lambda: _verify("kdv", "strict"))
    add("strict linear wave b = a'", "linear_wave", "linear hyperbolic equation",
        lambda: _verify("linear_wave", "strict"))
    add("quasi e^u wave", "quasi_wave", "quasi self-adjoint wave", lambda: _verify("quasi_wave", "exp"))
    add("quasi fornberg-whitham search", "fornberg_whitham", "Fornberg-Whitham u-only search",
        lambda: _search("fornberg_whitham", "u-only", 3, ["1"]))
    add("quasi heat search", "heat", "heat u-only search", lambda: _search("heat", "u-only", 3, ["1"]))
    add("nonlinear heat", "nonlinear_heat", "nonlinear heat substitution",
        lambda: _search("nonlinear_heat", "pointwise", 2, ["x", "1"]))
    add("anisotropic heat 2D", "aniso_heat2", "anisotropic heat, two dimensions",
        lambda: _search("aniso_heat2", "pointwise", 3, ["x*y", "x", "y", "1"]))
    add("anisotropic heat 3D", "aniso_heat3", "anisotropic heat, three dimensions",
        lambda: _search("aniso_heat3", "pointwise", 3,
                        ["x*y*z", "x*y", "x*z", "y*z", "x", "y", "z", "1"]))
    add("nonlinear wave", "nonlinear_wave", "nonlinear wave substitution",
        lambda: _search("nonlinear_wave", "pointwise", 3, ["t*x", "t", "x", "1"]))
    add("anisotropic wave 2D", "aniso_wave2", "anisotropic wave, two dimensions",
        lambda: _search("aniso_wave2", "pointwise", 3,
                        ["t*x*y", "t*x", "t*y", "x*y", "t", "x", "y", "1"]))
    add("anisotropic wave 3D", "aniso_wave3", "anisotropic wave, three dimensions",
        lambda: _search("aniso_wave3", "pointwise", 4,
                        ["t*x*y*z", "t*x*y", "t*x*z", "t*y*z", "t*x", "t*y", "t*z", "x*y", "x*z",
                         "y*z", "t", "x", "y", "z", "1"], contains_only=True))
    add("kdv degree 3 search", "kdv", "KdV three-parameter family",
        lambda: _search("kdv", "pointwise", 3, ["1", "u", "x + t*u"]))
    add("kompaneets search", "kompaneets", "Kompaneets substitution",
        lambda: _search("kompaneets", "pointwise", 2, ["x^2"]))
    add("membrane search", "membrane", "membrane has no pointwise substitution",
        lambda: _search("membrane", "pointwise", 2, []))
    add("irrigation search", "irrigation_sac", "irrigation substitution under S' = aC",
        lambda: _search("irrigation_sac", "pointwise", 2, ["x*exp(a*t)", "exp(a*t)"]))
    add("differential sine-gordon", "sine_gordon", "sine-Gordon differential substitution",
        lambda: _verify("sine_gordon", "differential"))
    add("differential short pulse", "short_pulse", "short pulse differential substitution",
        lambda: _verify("short_pulse", "differential"))
    return c


# ---------------------------------------------------------------- criterion 3

def _noether_sg(sym: str, expected: str):
    doc = document("sine_gordon")
    sys = system("sine_gordon")
    L = doc.expr("-1/2*u_x*u_y + cos(u)")
    cv = CL.noether_vector(sys, L, doc.symmetries[sym])
    if not CL.verify_conservation(cv, sys).passed:
        return False, "Noether vector is not conserved"
    got = {i: X.canonicalize(c) for i, c in cv.components.items()}
    exp = {i: X.canonicalize(c) for i, c in doc.vectors[expected].items()}
    same = all(X.is_zero(got[i] - exp.get(i, X.ZERO)) for i in sys.indep)
    return same, "matches exactly" if same else f"got {cv.text()}"


def _sg_x3():
    sys = system("sine_gordon")
    doc = document("sine_gordon")
    cv = CL.conserved_vector(sys, substitution("sine_gordon", "differential"), doc.symmetries["X3"])
    if not CL.verify_conservation(cv, sys).passed:
        return False, "not conserved"
    coeffs = CL.linear_combination(cv, [vector("sine_gordon", "X1"), vector("sine_gordon", "X2")], sys)
    if coeffs is None:
        return False, "not a combination of the translation vectors"
    ok = all(not any(isinstance(a, X.IndepVar) for a in c.deep_atoms()) for c in coeffs)
    return ok, "coefficients " + ", ".join(X.to_text(c) for c in coeffs)


def _pulse_vector():
    sys = system("short_pulse")
    doc = document("short_pulse")
    cv = CL.conserved_vector(sys, substitution("short_pulse", "differential"), doc.symmetries["X3"])
    r = CL.equivalent(cv, vector("short_pulse", "X3"), sys)
    fixture = vector("short_pulse", "X3")
    div = CL.divergence(fixture, sys)
    v = doc.expr("u_t - 1/2*u^2*u_x")
    fact = doc.expr("2*(u_t - 1/2*u^2*u_x)*(u + 1/2*u^2*u_xx + u*u_x^2 - u_xt)")
    cert = CL.verify_conservation(fixture, sys)
    mu = cert.characteristic[0] if cert.characteristic else None
    ok = r is not None and X.is_zero(div - fact) and mu is not None and X.is_zero(mu + 2 * v)
    return ok, f"factor {X.to_text(r) if r is not None else '-'}; divergence factorizes; multiplier {X.to_text(mu) if mu is not None else '-'}"


def _irrigation():
    sys = system("irrigation_sac")
    doc = document("irrigation_sac")
    cv = CL.conserved_vector(sys, substitution("irrigation_sac", "exp"), doc.symmetries["X"])
    r = CL.equivalent(cv, vector("irrigation_sac", "X"), sys)
    printed = CL.verify_conservation(vector("irrigation_sac", "X_printed"), sys).passed
    return r is not None and not printed, (f"factor {X.to_text(r) if r is not None else '-'}; "
                                          f"printed flux signs conserved: {printed}")


def _kdv_vector(vec: str):
    cert = CL.verify_conservation(vector("kdv", vec), system("kdv"))
    mu = {f"{k}{''.join(K)}": X.to_text(m) for (k, K), m in (cert.multipliers or {}).items()}
    return cert.passed, f"multipliers {mu}"


def _boussinesq():
    sys = system("boussinesq")
    cv = vector("boussinesq", "vorticity")
    if not CL.verify_conservation(cv, sys).passed:
        return False, "not conserved"
    red = CL.reduce_triviality(cv, sys)
    r = CL.equivalent(cv, vector("boussinesq", "vorticity_reduced"), sys)
    ok = not red["t"].terms and r is not None
    return ok, f"reduced time component {X.to_text(red['t'])}; factor {X.to_text(r) if r is not None else '-'}"


def _criterion3() -> list:
    c = []

    def add(name, fixture, anchor, fn):
        c.append(Check(name, 3, fixture, anchor, fn))

    add("sine-gordon X1", "sine_gordon", "sine-Gordon translation in x",
        lambda: _vector_from("sine_gordon", "X1", "d1", "X1", 1))
    add("sine-gordon X2", "sine_gordon", "sine-Gordon translation in y",
        lambda: _vector_from("sine_gordon", "X2", "d1", "X2"))
    add("sine-gordon noether X3", "sine_gordon", "sine-Gordon Noether vector for the scaling",
        lambda: _noether_sg("X3", "noether_X3"))
    add("sine-gordon X3 combination", "sine_gordon", "sine-Gordon scaling vector is not new", _sg_x3)
    add("short pulse X3", "short_pulse", "short pulse conserved vector", _pulse_vector)
    add("irrigation X", "irrigation_sac", "irrigation conserved vector", _irrigation)
    add("chaplygin X7 galilean", "chaplygin", "Chaplygin nonlocal vector with sigma",
        lambda: _vector_from("chaplygin", "X7", "galilean", "X7_galilean"))
    add("chaplygin X7 mass trivial", "chaplygin", "Chaplygin trivial nonlocal vector",
        lambda: _vector_from("chaplygin", "X7", "mass", "", trivial=True))
    add("chaplygin X8 energy", "chaplygin", "Chaplygin nonlocal vector from energy",
        lambda: _vector_from("chaplygin", "X8", "energy", "X8_energy"))
    add("chaplygin X8 momentum", "chaplygin", "Chaplygin nonlocal vector from momentum",
        lambda: _vector_from("chaplygin", "X8", "momentum", "X8_momentum"))
    add("chaplygin X8 galilean", "chaplygin", "Chaplygin nonlocal vector from Galilean law",
        lambda: _vector_from("chaplygin", "X8", "galilean", "X8_galilean"))
    add("kdv galilean vector", "kdv", "KdV Galilean conserved vector", lambda: _kdv_vector("galilean"))
    add("kdv energy vector", "kdv", "KdV energy conserved vector", lambda: _kdv_vector("energy"))
    add("boussinesq reduction", "boussinesq", "Boussinesq vector modulo trivial vectors", _boussinesq)
    return c


# ---------------------------------------------------------------- criterion 4

def _ode(name: str, rules=None, space=None):
    doc = document(name)
    F = doc.system().equations[0]
    return O.LinearODE.from_expr(F, "x", "y", rules or doc.rules)


def _first_integral(name: str, phi: str, expected: str, rhs: str | None = None, integral: str | None = None,
                    rules=None, space=None):
    ode = _ode(name, rules)
    sp = space or document(name).space
    if rhs is not None:
        ode.rhs = parse_expr(rhs, sp)
    fi = O.reduce_order(ode, parse_expr(phi, sp))
    ok = fi.verified and proportional(X.canonicalize(fi.psi), X.canonicalize(parse_expr(expected, sp))) == 1
    if integral is not None:
        ok = ok and X.is_zero(fi.integral - parse_expr(integral, sp))
    return ok, fi.text()


def _ode17():
    sp = extended_space("ode17", aux=("E",))
    rules = NonlocalRules.of({"E": {"x": parse_expr("P(x)*E", sp)}})
    ode = _ode("ode17", rules)
    adj = O.ode_adjoint(ode)
    expect = parse_expr("z_x - P(x)*z", sp)
    if proportional(adj.operator(), expect) is None:
        return False, f"adjoint {X.to_text(adj.operator())}"
    ok1, t1 = _first_integral("ode17", "E", "E*y", rules=rules, space=sp)
    sp2 = extended_space("ode17", aux=("E",))
    sp2 = Space(sp2.indep, sp2.dep, sp2.adjoint, sp2.params, sp2.aux, tuple(sp2.funcs) + ("Q",))
    ode = _ode("ode17", rules)
    ode.rhs = parse_expr("Q(x)", sp2)
    fi = O.reduce_order(ode, parse_expr("E", sp2))
    ok2 = fi.verified and bool(fi.quadratures)
    return ok1 and ok2, f"{t1}; with right-hand side Q: {fi.text()}"


def _ode18():
    ode = _ode("ode18")
    sp = document("ode18").space
    adj = O.ode_adjoint(ode)
    expect = parse_expr("z_xx - sin(x)/x^2*z_x + sin(x)/x^3*z", sp)
    a_ok = X.is_zero(adj.operator() - expect)
    good = O.integrating_factor_check(ode, parse_expr("x", sp))
    bad = O.integrating_factor_check(ode, parse_expr("1", sp))
    ok, text = _first_integral("ode18", "x", "x*y_x + (sin(x)/x - 1)*y")
    return a_ok and good.passed and not bad.passed and bad.agree and ok, text


def random_linear_ode(rng, order: int, x: str = "x") -> O.LinearODE:
    xe = X.indep(x)

    def poly():
        deg = int(rng.integers(0, 3))
        e = X.ZERO
        for k in range(deg + 1):
            e = e + Expr.const(int(rng.integers(-3, 4))) * xe ** k
        return e

    coeffs = [poly() for _ in range(order + 1)]
    if not coeffs[0].terms:
        coeffs[0] = Expr.const(1)
    return O.LinearODE(coeffs, x)


def bilinear_defect(ode: O.LinearODE, z: Expr) -> Expr:
    adj = O.ode_adjoint(ode)
    y = Expr.atom(X.Jet(ode.y))
    from .calculus import total_derivative
    return z * ode.operator() - y * adj.apply(z) - total_derivative(O.concomitant_psi(ode, z), ode.x)


def _bilinear(n: int = 200, seed: int = 11):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        ode = random_linear_ode(rng, int(rng.integers(1, 5)))
        z = Expr.atom(X.Jet("z"))
        if bilinear_defect(ode, z).terms:
            bad += 1
    return bad == 0, f"{n} random operators, {bad} failures"


def _criterion4() -> list:
    c = []

    def add(name, fixture, anchor, fn):
        c.append(Check(name, 4, fixture, anchor, fn))

    add("ode exact homogeneous", "ode16", "exact second-order ODE",
        lambda: _first_integral("ode16", "1", "y_x + y*sin(x)"))
    add("ode exact with 2x", "ode16", "exact ODE with right-hand side 2x",
        lambda: _first_integral("ode16", "1", "y_x + y*sin(x)", rhs="2*x", integral="x^2"))
    add("ode first order", "ode17", "first-order linear ODE", _ode17)
    add("ode factor x", "ode18", "second-order ODE with factor x", _ode18)
    add("ode bilinear identity", "", "bilinear concomitant identity", _bilinear)
    return c


# ---------------------------------------------------------------- criterion 5

def _vdp_adjoint():
    sys = system("van_der_pol")
    got = A.approx_adjoint(sys)[0]
    doc = document("van_der_pol")
    exp = doc.expr("z_xx + z + eps*(z_x - 3*z_x*y_x^2 + 6*z*y*y_x)")
    eps = sys.small_parameter
    ok = X.is_zero(got.to_expr(eps) - exp)
    return ok, got.text()


G_RHS = {
    "y": "4*y_x^3 - 6*y^2*y_x - 2*y_x",
    "cos(x)": "sin(x) - 3*y_x^2*sin(x) - 6*y*y_x*cos(x)",
    "sin(x)": "3*y_x^2*cos(x) - cos(x) - 6*y*y_x*sin(x)",
}


def _vdp_g(f: str):
    sys = system("van_der_pol")
    doc = document("van_der_pol")
    ge = A.approx_determining_g(sys, doc.expr(f))
    ok = X.is_zero(ge.rhs - doc.expr(G_RHS[f])) and X.is_zero(ge.lhs - A.g_operator(sys, ge.g))
    return ok, X.to_text(ge.rhs)


def _pkdv_sub(sub: str, expect: bool = True):
    v = A.approx_verify_substitution(system("perturbed_kdv"), substitution("perturbed_kdv", sub))
    return v.passed == expect, "; ".join(r.text() for r in v.residual)


def _pkdv_vector():
    sys = system("perturbed_kdv")
    doc = document("perturbed_kdv")
    v = A.approx_conserved_vector(sys, substitution("perturbed_kdv", "simple"), doc.symmetries["X4"])
    r = A.approx_equivalent(sys, v.components, doc.vectors["X4"])
    ok = v.passed and r is not None
    return ok, f"residual {v.residual.text()}; factor {r}"


def _pkdv_adjoint():
    sys = system("perturbed_kdv")
    got = A.approx_adjoint(sys)[0]
    exp = document("perturbed_kdv").expr("v_t - v_xxx - u*v_x + eps*v")
    r = proportional(X.canonicalize(got.to_expr(sys.small_parameter)), exp)
    return r is not None, f"{got.text()} (factor {r})"


def _vdp_residual():
    sys = system("van_der_pol")
    doc = document("van_der_pol")
    v = A.approx_conserved_vector(sys, substitution("van_der_pol", "approx"), doc.symmetries["X1"])
    f = doc.expr("alpha*y + beta*cos(x) + gamma*sin(x)")
    ge = A.approx_determining_g(sys, f)
    ok = not v.residual.zeroth.terms and X.is_zero(v.residual.first - doc.expr("y_x") * ge.defect())
    return ok, "first-order residual is y' times the defect of the g-equation"


def _criterion5() -> list:
    c = []

    def add(name, fixture, anchor, fn):
        c.append(Check(name, 5, fixture, anchor, fn))

    add("van der pol approximate adjoint", "van_der_pol", "van der Pol approximate adjoint", _vdp_adjoint)
    for f in G_RHS:
        add(f"van der pol g-equation for {f}", "van_der_pol", "van der Pol equation for g",
            lambda f=f: _vdp_g(f))
    add("van der pol conservation residual", "van_der_pol", "van der Pol approximate conservation",
        _vdp_residual)
    add("perturbed kdv approximate adjoint", "perturbed_kdv", "perturbed KdV approximate adjoint",
        _pkdv_adjoint)
    add("perturbed kdv simple substitution", "perturbed_kdv", "perturbed KdV v = u + 2 eps x",
        lambda: _pkdv_sub("simple"))
    add("perturbed kdv family", "perturbed_kdv", "perturbed KdV approximate substitution family",
        lambda: _pkdv_sub("family"))
    add("perturbed kdv X4 vector", "perturbed_kdv", "perturbed KdV approximate conserved vector",
        _pkdv_vector)
    return c


# ---------------------------------------------------------------- criterion 7

def _direct(name: str, mus: list, expect: bool):
    sp = extended_space(name)
    mu = [parse_expr(m, sp) for m in mus]
    sys = system(name)
    ok = CL.direct_multiplier_test(sys, mu)
    res = [X.to_text(r) for r in CL.direct_residuals(sys, mu)]
    return ok == expect, f"test {'passes' if ok else 'fails'}; residuals {res}"


def _kompaneets_uonly():
    outs = []
    for d in (1, 2, 3):
        if _family("kompaneets", "u-only", d):
            return False, f"degree {d} found a substitution"
        outs.append(d)
    return True, f"no u-only substitution up to degree {outs[-1]}"


def _criterion7() -> list:
    c = []

    def add(name, fixture, anchor, fn):
        c.append(Check(name, 7, fixture, anchor, fn))

    add("heat v = u fails", "heat", "heat is not strictly self-adjoint",
        lambda: _verify("heat", "strict", expect=False))
    add("kompaneets u-only fails", "kompaneets", "Kompaneets has no u-only substitution", _kompaneets_uonly)
    add("chaplygin sigma multiplier fails", "chaplygin", "Chaplygin sigma multiplier",
        lambda: _direct("chaplygin", ["0", "sigma", "0"], False))
    add("chaplygin t-weighted multipliers fail", "chaplygin", "Chaplygin t-weighted multipliers",
        lambda: _direct("chaplygin", ["t*rho", "t*v", "0"], False))
    add("kdv (u, -u) fails", "kdv", "KdV non-conserved vector",
        lambda: (not CL.verify_conservation(vector("kdv", "bogus"), system("kdv")).passed, "residual nonzero"))
    add("kdv multiplier x + t u passes", "kdv", "KdV direct multiplier",
        lambda: _direct("kdv", ["x + t*u"], True))
    add("perturbed kdv v = u fails", "perturbed_kdv", "perturbed KdV without correction",
        lambda: _pkdv_sub("unperturbed", expect=False))
    return c


# ---------------------------------------------------------------- extras (Part-3 constraints)

CHAPLYGIN_SOLUTIONS = {
    "tangent": {"rho": "1/(a*x + b)", "v": "k*(a*x + b)*tan(c - a*k*t)",
                "p": "k^2*(a*x + b) + Q*cos(c - a*k*t)"},
    "linear": {"rho": "1/b", "v": "b*(A*t + B)", "p": "-A*x + b/2*A^2*t^2 + A*B*b*t + Q"},
}


def chaplygin_solution(key: str) -> dict:
    sp = extended_space("chaplygin", params=("a", "b", "k", "c", "Q", "A", "B"))
    return {v: parse_expr(t, sp) for v, t in CHAPLYGIN_SOLUTIONS[key].items()}


def _chaplygin_constraints(key: str):
    sys = system("chaplygin")
    rep = CL.emit_constraints(sys, vector("chaplygin", "mass"))
    ok = CL.solution_passes(sys, chaplygin_solution(key), rep.constraints)
    return ok, f"{len(rep.constraints)} constraints; {rep.note}"


def _irrigation_constraints():
    sys = system("irrigation_sac")
    rep = CL.emit_constraints(sys, vector("irrigation_sac", "X"))
    doc = document("irrigation_sac")
    exp = [doc.expr(t) for t in ("a*S(psi) + S'(psi)*psi_t", "K(psi)*psi_xx + K'(psi)*psi_x^2",
                                 "K(psi)*psi_zz + K'(psi)*psi_z*(psi_z - 1)")]
    ok = len(rep.constraints) == 3
    for got, e in zip(rep.constraints, exp):
        ok = ok and _proportional_numeric(got, e)
    return ok, "; ".join(X.to_text(g) for g in rep.constraints)


def _proportional_numeric(a: Expr, b: Expr) -> bool:
    """a / b is a nonzero factor free of jets."""
    q = a / b
    return not q.jets() and not X.is_zero(q)


def _criterion_extra() -> list:
    return [
        Check("chaplygin tangent solution", 0, "chaplygin", "Chaplygin solution from the mass law",
              lambda: _chaplygin_constraints("tangent")),
        Check("chaplygin linear solution", 0, "chaplygin", "Chaplygin solution with a = 0",
              lambda: _chaplygin_constraints("linear")),
        Check("irrigation constraints", 0, "irrigation_sac", "irrigation differential constraints",
              _irrigation_constraints),
    ]


def checks() -> list:
    return (_criterion1() + _criterion2() + _criterion3() + _criterion4() + _criterion5()
            + _criterion7() + _criterion_extra())


def run(filter: str | None = None, criterion: int | None = None, seed: int | None = None) -> list:
    out = []
    with X.seeded(seed if seed is not None else X.default_seed()):
        for ch in checks():
            if criterion is not None and ch.criterion != criterion:
                continue
            if filter and filter not in ch.name and filter not in ch.fixture:
                continue
            t = time.perf_counter()
            try:
                ok, detail = ch.run()
            except AdjforgeError as e:
                ok, detail = False, f"{type(e).__name__}: {e}"
            out.append(Result(ch.name, ch.criterion, ch.fixture, ch.anchor, bool(ok), detail,
                              time.perf_counter() - t))
    return out


__all__ = ["CHAPLYGIN_SOLUTIONS", "Check", "Result", "bilinear_defect", "chaplygin_solution", "checks",
           "document", "random_linear_ode", "run", "span_relation", "substitution", "system", "vector"]
