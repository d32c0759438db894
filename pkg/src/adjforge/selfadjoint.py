"""On-shell reduction and the self-adjointness classes.

A candidate substitution v = phi is accepted when the adjoint equations,
after replacing v and its derivatives by phi and its total derivatives,
reduce to zero modulo the original equations and their prolongations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from . import expr as X
from .adjoint import ProblemSystem, adjoint_system
from .calculus import total_derivative, total_derivative_multi
from .errors import AnsatzInsufficient, DivisionByZeroAtU0, InputError, NonEliminable, SplitFailure
from .expr import ONE, ZERO, Expr, Func, IndepVar, Jet, Parameter, is_zero, substitute

CLASSES = ("constant", "u-only", "pointwise", "differential")


# ---------------------------------------------------------------- on-shell reduction

def _contains_index(big: tuple, small: tuple) -> bool:
    rest = list(big)
    for s in small:
        if s not in rest:
            return False
        rest.remove(s)
    return True


class Reducer:
    """Eliminates leading derivatives and all their derivative-descendants."""

    def __init__(self, sys: ProblemSystem, post: Callable[[Expr], Expr] | None = None):
        self.sys = sys
        self.post = post
        self.solutions = {}
        self.jet_cache: dict = {}
        self.expr_cache: dict = {}
        for F, lead in zip(sys.equations, sys.leading):
            self.solutions[lead] = self._solve(F, lead)
        self._active: set = set()

    @staticmethod
    def _solve(F: Expr, lead: Jet) -> Expr:
        if F.degree(lead) != 1:
            raise NonEliminable(f"{lead.text()} does not occur linearly")
        a = F.coefficient(lead, 1)
        b = F - a * Expr.atom(lead)
        if b.contains(lead) or a.contains(lead):
            raise NonEliminable(f"{lead.text()} cannot be isolated")
        return -b / a

    def lead_for(self, j: Jet):
        for lead in self.solutions:
            if lead.var == j.var and _contains_index(j.index, lead.index):
                return lead
        return None

    def reducible(self, e: Expr) -> list:
        return [a for a in e.deep_atoms() if isinstance(a, Jet) and self.lead_for(a) is not None]

    def jet_value(self, j: Jet) -> Expr:
        r = self.jet_cache.get(j)
        if r is not None:
            return r
        if j in self._active:
            raise NonEliminable(f"cyclic elimination through {j.text()}")
        self._active.add(j)
        try:
            lead = self.lead_for(j)
            if j == lead:
                r = self.reduce(self.solutions[lead])
            else:
                rest = list(j.index)
                for s in lead.index:
                    rest.remove(s)
                step = rest[-1]
                parent = list(j.index)
                parent.remove(step)
                r = self.reduce(total_derivative(self.jet_value(Jet(j.var, parent)), step, self.sys.rules))
        finally:
            self._active.discard(j)
        self.jet_cache[j] = r
        return r

    def reduce(self, e: Expr) -> Expr:
        cached = self.expr_cache.get(e)
        if cached is not None:
            return cached
        out = e
        for _ in range(50):
            red = self.reducible(out)
            if not red:
                break
            bind = {j: self.jet_value(j) for j in sorted(red, key=lambda a: a.key)}
            out = substitute(out, bind, check_cycles=False)
            if self.post is not None:
                out = self.post(out)
        else:
            raise NonEliminable("on-shell reduction did not terminate")
        self.expr_cache[e] = out
        return out


def reducer_for(sys: ProblemSystem) -> Reducer:
    r = getattr(sys, "_reducer", None)
    if r is None:
        r = Reducer(sys)
        sys._reducer = r
    return r


def on_shell_reduce(e: Expr, sys: ProblemSystem) -> Expr:
    """Normal form of e modulo the equations and their total-derivative prolongations."""
    return reducer_for(sys).reduce(e)


# ---------------------------------------------------------------- substitutions

@dataclass
class Substitution:
    mapping: dict
    dependency_class: str = "pointwise"
    order: int = 0
    name: str = ""

    def nontrivial(self) -> bool:
        return any(e.terms for e in self.mapping.values())


@dataclass
class SAVerdict:
    cls: str
    substitution: Substitution | None
    residual: list
    passed: bool
    multipliers: list | None = None


def substitute_adjoint(e: Expr, sub: Substitution, sys: ProblemSystem) -> Expr:
    """Replace every jet v_K of an adjoint variable by D_K(phi)."""
    bind = {}
    for a in e.deep_atoms():
        if isinstance(a, Jet) and a.var in sub.mapping:
            bind[a] = total_derivative_multi(sub.mapping[a.var], a.index, sys.rules)
    return substitute(e, bind, check_cycles=False) if bind else e


def split_by_coefficients(e: Expr) -> list:
    """Coefficients of the monomials in undetermined-coefficient parameters."""
    if not e.terms:
        return []
    return list(e.collect(lambda a: isinstance(a, Parameter) and a.role == X.COEF).values())


def vanishes(e: Expr) -> bool:
    return all(is_zero(c) for c in split_by_coefficients(e))


def classify(sub: Substitution, sys: ProblemSystem) -> str:
    pairs = dict(zip(sys.adjoint_vars, sys.dep))
    if len(sys.adjoint_vars) == len(sys.dep) and all(
            sub.mapping.get(v, ZERO) == Expr.atom(Jet(u)) for v, u in pairs.items()):
        return "strict"
    atoms = set()
    for e in sub.mapping.values():
        atoms |= e.deep_atoms()
    jets = [a for a in atoms if isinstance(a, Jet)]
    if any(j.order > 0 for j in jets):
        return "nonlinear-differential"
    if any(isinstance(a, IndepVar) for a in atoms):
        return "nonlinear"
    return "quasi"


def verify_substitution(sys: ProblemSystem, sub: Substitution) -> SAVerdict:
    """Substitute v -> phi into the adjoint system and reduce on-shell."""
    if not sub.nontrivial():
        raise InputError("substitution is identically zero")
    residual = []
    for Fs in adjoint_system(sys):
        residual.append(on_shell_reduce(substitute_adjoint(Fs, sub, sys), sys))
    passed = all(vanishes(r) for r in residual)
    verdict = SAVerdict(classify(sub, sys) if passed else "not-found", sub, residual, passed)
    if passed and not any(p.role == X.COEF for e in sub.mapping.values()
                          for p in e.deep_atoms() if isinstance(p, Parameter)):
        mults = []
        for Fs in adjoint_system(sys):
            m = extract_multipliers(substitute_adjoint(Fs, sub, sys), sys)
            mults.append(m)
        verdict.multipliers = mults
    return verdict


# ---------------------------------------------------------------- multipliers

def extract_multipliers(E: Expr, sys: ProblemSystem, max_steps: int = 400):
    """Write E = sum_k sum_K mu_{k,K} D_K(F_k); returns {(k, K): mu} or None."""
    red = reducer_for(sys)
    leads = list(sys.leading)
    coeffs = [F.coefficient(lead) for F, lead in zip(sys.equations, leads)]
    mu: dict = {}
    for _ in range(max_steps):
        cands = [a for a in E.deep_atoms() if isinstance(a, Jet) and red.lead_for(a) is not None]
        if not cands:
            break
        j = max(cands, key=lambda a: (a.order, a.key))
        if E.degree(j) != 1 or any(a.composite and any(x.contains(j) for x in a.inner()) for a in E.atoms()):
            return None
        k = leads.index(red.lead_for(j))
        rest = list(j.index)
        for s in leads[k].index:
            rest.remove(s)
        K = tuple(sorted(rest))
        c = E.coefficient(j) / coeffs[k]
        mu[(k, K)] = mu.get((k, K), ZERO) + c
        E = E - c * total_derivative_multi(sys.equations[k], K, sys.rules)
    else:
        return None
    if E.terms and not is_zero(E):
        return None
    return {key: v for key, v in mu.items() if v.terms}


def characteristic_multipliers(mu: dict, sys: ProblemSystem) -> list:
    """Q_k = sum_K (-D)_K mu_{k,K}, so sum mu D_K F differs from sum Q_k F_k by a divergence."""
    out = [ZERO] * len(sys.equations)
    for (k, K), m in mu.items():
        t = total_derivative_multi(m, K, sys.rules)
        out[k] = out[k] + (t if len(K) % 2 == 0 else -t)
    return out


# ---------------------------------------------------------------- determining equations

class DeterminingSystem(list):
    """List of determining equations; ``unknowns`` maps phi names to their argument tuples."""

    def __init__(self, eqs=(), unknowns=None, targets=None):
        super().__init__(eqs)
        self.unknowns = dict(unknowns or {})
        self.targets = dict(targets or {})


def _phi_names(sys: ProblemSystem) -> dict:
    taken = set(sys.space.names())
    out = {}
    k = 0
    for v in sys.adjoint_vars:
        n = "phi" if len(sys.adjoint_vars) == 1 else f"phi{k + 1}"
        while n in taken:
            k += 1
            n = f"phi{k + 1}"
        k += 1
        taken.add(n)
        out[v] = n
    return out


def _is_phi(a, names) -> bool:
    return isinstance(a, Func) and a.name in names


def determining_system(sys: ProblemSystem, dependency_class: str = "pointwise") -> DeterminingSystem:
    """Split the reduced adjoint residual under v = phi(args) into coefficient equations."""
    if dependency_class not in ("u-only", "pointwise", "quasi"):
        raise InputError(f"determining equations are generated for u-only or pointwise classes, not {dependency_class!r}")
    args = tuple(Expr.atom(Jet(u)) for u in sys.dep)
    if dependency_class == "pointwise":
        args = tuple(X.indep(i) for i in sys.indep) + args
    names = _phi_names(sys)
    mapping = {v: X.func(n, *args) for v, n in names.items()}
    sub = Substitution(mapping, dependency_class)
    phinames = set(names.values())
    raw = []
    for Fs in adjoint_system(sys):
        r = on_shell_reduce(substitute_adjoint(Fs, sub, sys), sys)
        raw.extend(_split(r, phinames))
    eqs = _tidy(raw, phinames)
    return DeterminingSystem(eqs, {n: args for n in phinames}, {v: n for v, n in names.items()})


def _marker(a, phinames) -> bool:
    if isinstance(a, Jet):
        return a.order > 0
    if isinstance(a, Func) and not a.builtin and a.name not in phinames:
        return True
    return False


def _split(r: Expr, phinames) -> list:
    if not r.terms:
        return []
    for a in r.atoms():
        if a.composite and not _marker(a, phinames):
            inner = [j for x in a.inner() for j in x.jets() if j.order > 0]
            if inner:
                raise SplitFailure(f"derivative jets inside {a.text()}")
        if isinstance(a, Func) and not a.builtin and a.name not in phinames:
            if any(j.order > 0 for x in a.args for j in x.jets()):
                raise SplitFailure(f"derivative jets inside {a.text()}")
    return list(r.collect(lambda a: _marker(a, phinames)).values())


def _primitive(e: Expr, phinames) -> Expr:
    """Divide out the rational content and any common factor free of phi."""
    items = sorted(e.terms.items(), key=lambda p: X._mono_key(p[0]))
    lead = items[0][1]
    common = None
    for m, _ in items:
        d = {a: x for a, x in m if not _is_phi(a, phinames)}
        if common is None:
            common = d
        else:
            common = {a: min(x, d[a]) for a, x in common.items() if a in d}
    common = {a: x for a, x in (common or {}).items() if not (isinstance(a, Func) and a.is_exp)}
    factor = Expr({X._sorted_mono({a: -x for a, x in common.items()}): 1 / lead}) if common else Expr.const(1 / lead)
    out = e * factor
    # an exp factor common to every term is dropped as well
    atoms_all = None
    for m in out.terms:
        s = {a for a, _ in m if not _is_phi(a, phinames) and (isinstance(a, Func) and a.is_exp)}
        atoms_all = s if atoms_all is None else atoms_all & s
    if atoms_all:
        for a in atoms_all:
            out = out * X.exp(-a.args[0])
    return out


def _tidy(raw: list, phinames) -> list:
    eqs = []
    seen = set()
    for e in raw:
        if not e.terms:
            continue
        p = _primitive(e, phinames)
        if p not in seen and (-p) not in seen:
            seen.add(p)
            eqs.append(p)
    zero_atoms = []
    for e in eqs:
        if len(e.terms) == 1:
            (m, _), = e.terms.items()
            phis = [a for a, _ in m if _is_phi(a, phinames)]
            if len(phis) == 1:
                zero_atoms.append(phis[0])

    def implied(a) -> bool:
        return any(z.name == a.name and z != a and all(x >= y for x, y in zip(a.derivs, z.derivs))
                   for z in zero_atoms)

    out = []
    for e in eqs:
        if len(e.terms) == 1:
            (m, _), = e.terms.items()
            phis = [a for a, _ in m if _is_phi(a, phinames)]
            if len(phis) == 1:
                if implied(phis[0]):
                    continue
                out.append(Expr.atom(phis[0]))
                continue
        zmap = {z: ZERO for z in zero_atoms}
        zmap.update({a: ZERO for a in e.atoms() if _is_phi(a, phinames) and implied(a)})
        r = substitute(e, zmap, check_cycles=False)
        if r.terms:
            out.append(_primitive(r, phinames))
    final = []
    for e in out:
        if e not in final:
            final.append(e)
    return sorted(final, key=lambda e: (len(e.terms), e.sort_key()))


# ---------------------------------------------------------------- solving determining equations

def _all_monomials(atoms: list, degree: int) -> list:
    res = [()]
    frontier = [()]
    for _ in range(degree):
        nxt = []
        for m in frontier:
            start = atoms.index(m[-1]) if m else 0
            for a in atoms[start:]:
                nxt.append(m + (a,))
        res.extend(nxt)
        frontier = nxt
    return res


def _phi_derivative(ansatz: Expr, args: tuple, derivs: tuple) -> Expr:
    out = ansatz
    for a, d in zip(args, derivs):
        (atom,) = a.atoms()
        for _ in range(d):
            out = out.diff(atom)
    return out


def _exp_factor(dets, phiname, args) -> Expr:
    """exp(-c2/c1 * x_i) when some equation reads c1*phi_{x_i} + c2*phi with constant c1, c2."""
    for e in dets:
        if len(e.terms) != 2:
            continue
        parts = {}
        ok = True
        for m, c in e.terms.items():
            phis = [(a, x) for a, x in m if isinstance(a, Func) and a.name == phiname]
            others = [a for a, _ in m if not (isinstance(a, Func) and a.name == phiname)]
            if len(phis) != 1 or phis[0][1] != 1 or any(not isinstance(a, Parameter) or a.role == X.COEF for a in others):
                ok = False
                break
            a = phis[0][0]
            coef = Expr({tuple(p for p in m if p[0] != a): c})
            parts[a.derivs] = coef
        if not ok or len(parts) != 2:
            continue
        zero = tuple(0 for _ in args)
        if zero not in parts:
            continue
        for d, c1 in parts.items():
            if sum(d) == 1:
                k = d.index(1)
                if isinstance(next(iter(args[k].atoms())), IndepVar):
                    return X.exp(-(parts[zero] / c1) * args[k])
    return ONE


def _polynomial_in(e: Expr, allowed) -> bool:
    for m in e.terms:
        for a, x in m:
            if a in allowed and not (isinstance(x, int) and x > 0):
                return False
            if a in allowed or not a.composite:
                # atoms other than the arguments of phi are splitting markers
                continue
            if isinstance(a, Func) and a.is_exp:
                continue
            if any(x_.contains(b) for x_ in a.inner() for b in allowed):
                return False
    return True


def _coef_name(k: int) -> str:
    return f"_c{k}"


def solve_determining(dets: DeterminingSystem, degree: int = 3, names: list | None = None) -> list:
    """Polynomial (times an optional exponential) solutions of the determining equations.

    Returns one Substitution whose coefficients are fresh undetermined parameters
    C1, C2, ..., or an empty list when only phi = 0 survives.
    """
    unknowns = dict(dets.unknowns)
    targets = dict(getattr(dets, "targets", {}) or {})
    if not unknowns:
        raise InputError("no unknown functions in the determining system")
    ansatz = {}
    coefs = []
    cols = {}
    for phi in sorted(unknowns):
        args = unknowns[phi]
        arg_atoms = [next(iter(a.atoms())) for a in args]
        mons = _all_monomials(arg_atoms, degree)
        mons.sort(key=lambda m: (-len(m), [a.key for a in m]))
        factor = _exp_factor(dets, phi, args)
        total = ZERO
        basis = []
        for m in mons:
            c = Parameter(_coef_name(len(coefs)), X.COEF)
            coefs.append(c)
            term = ONE
            for a in m:
                term = term * Expr.atom(a)
            term = term * factor
            basis.append(term)
            total = total + Expr.atom(c) * term
        ansatz[phi] = total
        cols[phi] = basis
    allowed = set()
    for args in unknowns.values():
        allowed |= {next(iter(a.atoms())) for a in args}
    insufficient = False
    rows = []
    for e in dets:
        bind = {}
        for a in e.deep_atoms():
            if isinstance(a, Func) and a.name in unknowns:
                bind[a] = _phi_derivative(ansatz[a.name], unknowns[a.name], a.derivs)
        for m in e.terms:
            coef = Expr({tuple(p for p in m if not (isinstance(p[0], Func) and p[0].name in unknowns)): Fraction(1)})
            if not _polynomial_in(coef, allowed):
                insufficient = True
        r = substitute(e, bind, check_cycles=False)
        for c in r.collect(lambda a: not (isinstance(a, Parameter) and a.role == X.COEF)).values():
            rows.append(c)
    if insufficient:
        warnings.warn("determining equations have non-polynomial coefficients; "
                      "the polynomial ansatz may miss solutions", AnsatzInsufficient, stacklevel=2)
    basis_vectors = _nullspace(rows, coefs)
    if not basis_vectors:
        return []
    names = names or [f"C{k + 1}" for k in range(len(basis_vectors))]
    mapping = {}
    offset = 0
    flat = []
    for phi in sorted(unknowns):
        flat.append((phi, offset, cols[phi]))
        offset += len(cols[phi])
    for phi, off, basis in flat:
        total = ZERO
        for j, vec in enumerate(basis_vectors):
            piece = ZERO
            for k, term in enumerate(basis):
                if vec[off + k].terms:
                    piece = piece + vec[off + k] * term
            if piece.terms:
                total = total + X.param(names[j], X.COEF) * piece
        mapping[phi] = total
    inv = {n: v for v, n in targets.items()} if targets else {phi: phi for phi in unknowns}
    cls = "pointwise" if any(isinstance(next(iter(a.atoms())), IndepVar)
                             for args in unknowns.values() for a in args) else "u-only"
    sub = Substitution({inv.get(phi, phi): e for phi, e in mapping.items()}, cls, name="solved")
    return [sub]


def _nullspace(rows: list, coefs: list) -> list:
    """Basis of the solutions of the homogeneous linear system rows . c = 0."""
    import sympy
    from sympy.polys.matrices import DomainMatrix

    from .sym import to_sympy, from_sympy

    index = {c: k for k, c in enumerate(coefs)}
    symbols: dict = {}
    table = []
    for r in rows:
        row = [0] * len(coefs)
        for m, c in r.terms.items():
            cs = [a for a, _ in m if a in index]
            if len(cs) != 1:
                raise InputError("determining equations are not linear in the ansatz coefficients")
            rest = Expr({tuple(p for p in m if p[0] not in index): c})
            k = index[cs[0]]
            row[k] = row[k] + to_sympy(rest, symbols)
        table.append(row)
    n = len(coefs)
    if not table:
        return [[ONE if i == j else ZERO for i in range(n)] for j in range(n)]
    M = DomainMatrix.from_list_sympy(len(table), n, table)
    M = M.to_field()
    ns = M.nullspace()
    basis = ns.to_Matrix().tolist() if ns.shape[0] else []
    out = []
    for vec in basis:
        # scale so the first nonzero entry is 1
        first = next(x for x in vec if x != 0)
        vec = [sympy.cancel(x / first) for x in vec]
        out.append([from_sympy(x, symbols) for x in vec])
    return out


# ---------------------------------------------------------------- multiplier rewriting

@dataclass
class MultiplierReport:
    mu: Expr
    verdict: SAVerdict
    phi: Expr


def multiplier_rewrite(sys: ProblemSystem, sub: Substitution) -> MultiplierReport:
    """mu = phi/u; mu*F is then checked for strict self-adjointness with v = u."""
    if len(sys.equations) != 1 or len(sys.dep) != 1:
        raise InputError("multiplier rewriting needs a single equation in one dependent variable")
    v, u = sys.adjoint_vars[0], sys.dep[0]
    phi = sub.mapping[v]
    if not phi.terms:
        raise InputError("phi must be nonzero")
    uu = Expr.atom(Jet(u))
    warnings.warn("mu = phi/u is a formal quotient, valid where u != 0", DivisionByZeroAtU0, stacklevel=2)
    mu = phi / uu
    scaled = sys.replace(equations=[mu * sys.equations[0]])
    verdict = verify_substitution(scaled, Substitution({v: uu}, "u-only"))
    return MultiplierReport(mu, verdict, multiplier_to_phi(mu, sys))


def multiplier_to_phi(mu: Expr, sys: ProblemSystem) -> Expr:
    """Converse direction: phi = u * mu."""
    return Expr.atom(Jet(sys.dep[0])) * mu
