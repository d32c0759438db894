"""Canonical expressions over jet space.

An ``Expr`` is a finite sum of monomials with exact rational coefficients.
A monomial is a tuple of ``(atom, exponent)`` pairs sorted by a fixed total
order on atoms, so two expressions built by the same ring identities compare
equal as Python values.  Atoms are independent variables, parameters,
auxiliary (nonlocal) variables, jet coordinates, function applications and
non-monomial sums raised to negative or fractional powers.

Nothing beyond constant folding is attempted for the elementary functions;
``is_zero(e, "randomized")`` settles identities such as sin^2 + cos^2 = 1 by
evaluation at random points of jet space.
"""

from __future__ import annotations

import contextlib
import contextvars
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import (
    CyclicBinding,
    EvaluationSingularity,
    LinearAnsatzViolation,
    UndeclaredIndex,
)

BUILTINS = ("sin", "cos", "tan", "exp", "ln")

GENERIC = "generic"
SMALL = "small"
COEF = "coef"
ROLES = (GENERIC, SMALL, COEF)

_IV, _PAR, _AUX, _JET, _FUNC, _SUMPOW = range(6)


# ---------------------------------------------------------------- atoms

class Atom:
    """A multiplicative generator of the expression ring."""

    __slots__ = ("key", "_hash")
    rank = -1
    composite = False

    def _set_key(self, key):
        self.key = key
        self._hash = hash(key)

    def __eq__(self, other):
        return isinstance(other, Atom) and self.key == other.key

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        return f"{type(self).__name__}({self.text()})"

    def text(self):
        raise NotImplementedError

    def inner(self) -> tuple["Expr", ...]:
        return ()


class IndepVar(Atom):
    __slots__ = ("name",)
    rank = _IV

    def __init__(self, name: str):
        self.name = name
        self._set_key((_IV, name))

    def text(self):
        return self.name


class Parameter(Atom):
    """Named constant.  ``role`` is generic, small (the epsilon) or coef."""

    __slots__ = ("name", "role")
    rank = _PAR

    def __init__(self, name: str, role: str = GENERIC):
        if role not in ROLES:
            raise ValueError(f"unknown parameter role {role!r}")
        self.name = name
        self.role = role
        self._set_key((_PAR, name))

    def text(self):
        return self.name


class AuxVar(Atom):
    """Nonlocal variable; differentiated through rules, never by index shift."""

    __slots__ = ("name",)
    rank = _AUX

    def __init__(self, name: str):
        self.name = name
        self._set_key((_AUX, name))

    def text(self):
        return self.name


class Jet(Atom):
    """Jet coordinate u_I.  ``index`` is a sorted tuple of independent-variable names."""

    __slots__ = ("var", "index")
    rank = _JET

    def __init__(self, var: str, index: Iterable[str] = ()):
        index = tuple(sorted(index))
        self.var = var
        self.index = index
        self._set_key((_JET, var, len(index), index))

    @property
    def order(self):
        return len(self.index)

    def shifted(self, name: str) -> "Jet":
        return Jet(self.var, self.index + (name,))

    def text(self):
        if not self.index:
            return self.var
        if all(len(n) == 1 for n in self.index):
            return self.var + "_" + "".join(self.index)
        return self.var + "_{" + ",".join(self.index) + "}"


JetCoordinate = Jet


class Func(Atom):
    """Function application.

    Builtins (sin, cos, tan, exp, ln) take one argument and carry no derivative
    counts.  Any other name is an opaque function; ``derivs`` records how many
    times it has been differentiated in each argument slot.
    """

    __slots__ = ("name", "args", "derivs", "_deep")
    rank = _FUNC
    composite = True

    def __init__(self, name: str, args: tuple["Expr", ...], derivs: tuple[int, ...] | None = None):
        if derivs is None:
            derivs = (0,) * len(args)
        self.name = name
        self.args = tuple(args)
        self.derivs = tuple(derivs)
        self._deep = None
        self._set_key((_FUNC, name, self.derivs, tuple(a.sort_key() for a in self.args)))

    @property
    def builtin(self):
        return self.name in BUILTINS

    @property
    def is_exp(self):
        return self.name == "exp"

    def inner(self):
        return self.args

    def text(self):
        args = ", ".join(to_text(a) for a in self.args)
        if self.builtin or not any(self.derivs):
            return f"{self.name}({args})"
        if len(self.derivs) == 1 and self.derivs[0] <= 3:
            return f"{self.name}{chr(39) * self.derivs[0]}({args})"
        counts = ",".join(str(d) for d in self.derivs)
        return f"{self.name}'{{{counts}}}({args})"


class SumPow(Atom):
    """A multi-term sum kept atomic so it can carry a negative or fractional exponent.

    The base is normalized (leading coefficient +-1, no common monomial factor),
    so equal quotients share one atom.
    """

    __slots__ = ("base",)
    rank = _SUMPOW
    composite = True

    def __init__(self, base: "Expr"):
        self.base = base
        self._set_key((_SUMPOW, base.sort_key()))

    def inner(self):
        return (self.base,)

    def text(self):
        return "(" + to_text(self.base) + ")"


_LEAF_RANKS = (_IV, _PAR, _AUX, _JET)


def _is_leaf(a: Atom) -> bool:
    return a.rank in _LEAF_RANKS


# ---------------------------------------------------------------- linear-ansatz mode

_linear_ansatz = contextvars.ContextVar("linear_ansatz", default=False)


@contextlib.contextmanager
def linear_ansatz_mode():
    """Reject products of two undetermined coefficients inside the block."""
    token = _linear_ansatz.set(True)
    try:
        yield
    finally:
        _linear_ansatz.reset(token)


def _check_linear(terms):
    for m in terms:
        deg = 0
        for a, e in m:
            if a.rank == _PAR and a.role == COEF:
                deg += e
        if deg > 1:
            raise LinearAnsatzViolation("product of undetermined coefficients in linear-ansatz mode")


# ---------------------------------------------------------------- monomials

def _sorted_mono(d: dict) -> tuple:
    return tuple(sorted(d.items(), key=lambda p: p[0].key))


def _finish_mono(d: dict) -> tuple:
    exps = [a for a in d if a.rank == _FUNC and a.is_exp]
    if len(exps) > 1 or (exps and d[exps[0]] != 1):
        arg = ZERO
        for a in exps:
            arg = arg + a.args[0] * d.pop(a)
        if arg.terms:
            d[Func("exp", (arg,))] = 1
    return _sorted_mono(d)


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, e in m2:
        s = d.get(a, 0) + e
        if s == 0:
            del d[a]
        else:
            d[a] = s
    return _finish_mono(d)


def _mono_key(m: tuple) -> tuple:
    return tuple((a.key, e) for a, e in m)


def _needs_expand(m: tuple) -> bool:
    for a, e in m:
        if a.rank == _SUMPOW and isinstance(e, int) and e > 0:
            return True
        if a.rank == _SUMPOW and isinstance(e, Fraction) and e.denominator == 1 and e > 0:
            return True
    return False


def _norm_exp(e):
    if isinstance(e, Fraction) and e.denominator == 1:
        return int(e)
    return e


# ---------------------------------------------------------------- Expr

class Expr:
    """Immutable canonical sum of monomials."""

    __slots__ = ("terms", "_hash", "_key", "_atoms", "_deep", "_leaves")

    def __init__(self, terms: dict | None = None):
        self.terms = terms if terms is not None else {}
        self._hash = None
        self._key = None
        self._atoms = None
        self._deep = None
        self._leaves = None

    # construction ------------------------------------------------------
    @staticmethod
    def const(q) -> "Expr":
        q = _as_fraction(q)
        return Expr({(): q}) if q else Expr({})

    @staticmethod
    def atom(a: Atom, e=1) -> "Expr":
        if a.rank == _SUMPOW and isinstance(e, int) and e > 0:
            return a.base ** e
        return Expr({((a, e),): Fraction(1)})

    # identity ------------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, Expr):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == Expr.const(other).terms
        return NotImplemented

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def sort_key(self) -> tuple:
        if self._key is None:
            self._key = tuple(sorted((_mono_key(m), c) for m, c in self.terms.items()))
        return self._key

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"Expr({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    # queries ------------------------------------------------------------
    def is_const(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and () in self.terms)

    def const_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if self.is_const():
            return self.terms[()]
        raise ValueError(f"{self} is not constant")

    def atoms(self) -> frozenset:
        """Top-level atoms."""
        if self._atoms is None:
            self._atoms = frozenset(a for m in self.terms for a, _ in m)
        return self._atoms

    def deep_atoms(self) -> frozenset:
        """All atoms, including those nested in function arguments and sums."""
        if self._deep is None:
            out = set()
            for a in self.atoms():
                out.add(a)
                if a.composite:
                    for sub in a.inner():
                        out |= sub.deep_atoms()
            self._deep = frozenset(out)
        return self._deep

    def leaves(self) -> frozenset:
        """Atoms that evaluation must be given values for (opaque functions included)."""
        if self._leaves is None:
            self._leaves = frozenset(
                a for a in self.deep_atoms()
                if _is_leaf(a) or (a.rank == _FUNC and not a.builtin)
            )
        return self._leaves

    def has_sumpow(self) -> bool:
        return any(a.rank == _SUMPOW for a in self.atoms())

    def jets(self, var: str | None = None) -> set:
        return {a for a in self.deep_atoms() if a.rank == _JET and (var is None or a.var == var)}

    def contains(self, a: Atom) -> bool:
        return a in self.deep_atoms()

    def degree(self, a: Atom):
        return max((e for m in self.terms for b, e in m if b == a), default=0)

    def coefficient(self, a: Atom, e=1) -> "Expr":
        """Coefficient of a^e, treating other powers of a as different monomials."""
        out = {}
        for m, c in self.terms.items():
            if (a, e) in m:
                rest = tuple(p for p in m if p[0] != a)
                out[rest] = out.get(rest, 0) + c
        return Expr({k: v for k, v in out.items() if v})

    def without(self, a: Atom) -> "Expr":
        """Sum of the terms in which a does not occur at top level."""
        return Expr({m: c for m, c in self.terms.items() if all(b != a for b, _ in m)})

    def collect(self, select: Callable[[Atom], bool]) -> dict:
        """Split into {monomial over selected atoms: coefficient Expr}."""
        out: dict = {}
        for m, c in self.terms.items():
            key = tuple(p for p in m if select(p[0]))
            rest = tuple(p for p in m if not select(p[0]))
            bucket = out.setdefault(key, {})
            bucket[rest] = bucket.get(rest, 0) + c
        res = {}
        for k, b in out.items():
            b = {m: c for m, c in b.items() if c}
            if b:
                res[k] = Expr(b)
        return res

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if not other.terms:
            return self
        if not self.terms:
            return other
        t = dict(self.terms)
        for m, c in other.terms.items():
            s = t.get(m, 0) + c
            if s:
                t[m] = s
            else:
                t.pop(m, None)
        out = Expr(t)
        if self.has_sumpow() and other.has_sumpow():
            return _cancel(out)
        return out

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.terms.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if not self.terms or not other.terms:
            return ZERO
        if self.is_const():
            return other.scale(self.terms[()])
        if other.is_const():
            return self.scale(other.terms[()])
        t: dict = {}
        expand = False
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                s = t.get(m, 0) + c1 * c2
                if s:
                    t[m] = s
                else:
                    t.pop(m, None)
                if not expand and _needs_expand(m):
                    expand = True
        if _linear_ansatz.get():
            _check_linear(t)
        if expand:
            out = _expand_sumpows(t)
        else:
            out = Expr(t)
        if self.has_sumpow() or other.has_sumpow():
            return _cancel(out)
        return out

    __rmul__ = __mul__

    def scale(self, q) -> "Expr":
        q = _as_fraction(q)
        if not q:
            return ZERO
        if q == 1:
            return self
        return Expr({m: c * q for m, c in self.terms.items()})

    def __truediv__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if not other.terms:
            raise ZeroDivisionError("division by zero expression")
        if other.is_const():
            return self.scale(1 / other.terms[()])
        return self * other ** -1

    def __rtruediv__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return other * self ** -1

    def __pow__(self, n):
        if isinstance(n, Expr):
            if n.is_const():
                n = n.const_value()
            else:
                return _symbolic_power(self, n)
        n = _norm_exp(_as_fraction(n))
        if n == 0:
            return ONE
        if n == 1:
            return self
        if not self.terms:
            if n < 0:
                raise ZeroDivisionError("0 raised to a negative power")
            return ZERO
        if len(self.terms) == 1:
            (m, c), = self.terms.items()
            return _const_power(c, n) * _mono_power(m, n)
        if isinstance(n, int) and n > 0:
            out, base = ONE, self
            while n:
                if n & 1:
                    out = out * base
                n >>= 1
                if n:
                    base = base * base
            return out
        content, common, prim = _normalize_base(self)
        return _const_power(content, n) * _mono_power(common, n) * Expr({((SumPow(prim), n),): Fraction(1)})

    # calculus ------------------------------------------------------------
    def diff(self, target: Atom) -> "Expr":
        """Partial derivative with respect to an atom (chain rule through functions)."""
        def leaf(a):
            return ONE if a == target else None
        return derive(self, leaf, {}, target)

    def subs(self, bindings: Mapping, check_cycles: bool = False) -> "Expr":
        return substitute(self, bindings, check_cycles=check_cycles)


def _as_fraction(q) -> Fraction:
    if isinstance(q, Fraction):
        return q
    if isinstance(q, int):
        return Fraction(q)
    if isinstance(q, float):
        return Fraction(q).limit_denominator(10**12)
    if isinstance(q, str):
        return Fraction(q)
    raise TypeError(f"cannot use {q!r} as a rational constant")


def _coerce(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Expr.const(x)
    if isinstance(x, Atom):
        return Expr.atom(x)
    return None


ZERO = Expr({})
ONE = Expr({(): Fraction(1)})


def _const_power(c: Fraction, n) -> Expr:
    if isinstance(n, int):
        return Expr.const(c ** n)
    # fractional exponent: exact only for perfect powers
    if c < 0:
        raise ValueError("fractional power of a negative constant")
    num = _exact_root(c.numerator, n.denominator)
    den = _exact_root(c.denominator, n.denominator)
    if num is not None and den is not None:
        return Expr.const(Fraction(num, den) ** n.numerator)
    if c == 1:
        return ONE
    return Expr({((SumPow(Expr.const(c)), n),): Fraction(1)})


def _exact_root(k: int, r: int):
    if k == 0:
        return 0
    guess = round(k ** (1.0 / r))
    for g in (guess - 1, guess, guess + 1):
        if g >= 0 and g ** r == k:
            return g
    return None


def _mono_power(m: tuple, n) -> Expr:
    if not m:
        return ONE
    d = {}
    out = ONE
    for a, e in m:
        if a.rank == _FUNC and a.is_exp:
            out = out * exp(a.args[0] * (e * n))
            continue
        ne = _norm_exp(_as_fraction(e) * n)
        if a.rank == _SUMPOW and isinstance(ne, int) and ne > 0:
            out = out * a.base ** ne
            continue
        d[a] = ne
    if d:
        out = out * Expr({_finish_mono(d): Fraction(1)})
    return out


def _normalize_base(e: Expr):
    """Write e = content * common_monomial * primitive_sum."""
    items = sorted(e.terms.items(), key=lambda p: _mono_key(p[0]))
    content = abs(items[0][1])
    common = dict(items[0][0])
    for m, _ in items[1:]:
        dm = dict(m)
        common = {a: min(x, dm[a]) for a, x in common.items() if a in dm}
    common = {a: x for a, x in common.items() if not (a.rank == _FUNC and a.is_exp)}
    inv = _sorted_mono({a: -x for a, x in common.items()})
    prim: dict = {}
    for m, c in items:
        nm = _mono_mul(m, inv) if inv else m
        prim[nm] = prim.get(nm, 0) + c / content
    return content, _sorted_mono(common), Expr({k: v for k, v in prim.items() if v})


def _expand_sumpows(t: dict) -> Expr:
    out = ZERO
    plain = {}
    for m, c in t.items():
        if not _needs_expand(m):
            plain[m] = plain.get(m, 0) + c
            continue
        rest = {}
        factor = ONE
        for a, e in m:
            e = _norm_exp(e)
            if a.rank == _SUMPOW and isinstance(e, int) and e > 0:
                factor = factor * a.base ** e
            else:
                rest[a] = e
        out = out + Expr({_sorted_mono(rest): c}) * factor
    return out + Expr({k: v for k, v in plain.items() if v})


def _mono_cmp(m1: tuple, m2: tuple) -> int:
    """Lexicographic comparison of exponent vectors (a group order on monomials)."""
    d1, d2 = dict(m1), dict(m2)
    for a in sorted(set(d1) | set(d2), key=lambda a: a.key):
        x, y = d1.get(a, 0), d2.get(a, 0)
        if x != y:
            return 1 if x > y else -1
    return 0


def _leading(e: Expr):
    best = None
    for m, c in e.terms.items():
        if best is None or _mono_cmp(m, best[0]) > 0:
            best = (m, c)
    return best


def _exact_quotient(p: Expr, b: Expr):
    """p / b when the division is exact within a bounded number of steps, else None."""
    lm, lc = _leading(b)
    inv = _sorted_mono({a: -e for a, e in lm})
    q = ZERO
    r = p
    for _ in range(4 * len(p.terms) + 20):
        if not r.terms:
            return q
        m, c = _leading(r)
        t = Expr({_mono_mul(m, inv): c / lc})
        q = q + t
        r = r - t * b
    return None


def _cancel(e: Expr) -> Expr:
    """Cancel polynomial factors against sum atoms carrying negative integer powers."""
    changed = True
    rounds = 0
    while changed and rounds < 8:
        changed = False
        rounds += 1
        sps = {a for a in e.atoms() if a.rank == _SUMPOW}
        for s in sorted(sps, key=lambda a: a.key):
            groups: dict = {}
            for m, c in e.terms.items():
                k = 0
                rest = []
                for a, x in m:
                    if a == s:
                        k = x
                    else:
                        rest.append((a, x))
                groups.setdefault(k, {})[tuple(rest)] = c
            for k in sorted(g for g in groups if isinstance(g, int) and g < 0):
                part = Expr(groups[k])
                if len(part.terms) < 2 or part.has_sumpow():
                    continue
                q = _exact_quotient(part, s.base)
                if q is None:
                    continue
                old = Expr({m: c for m, c in e.terms.items() if dict(m).get(s) == k})
                new = q if k == -1 else q * Expr({((s, k + 1),): Fraction(1)})
                t = dict(e.terms)
                for m in old.terms:
                    del t[m]
                base = Expr(t)
                e = _plain_add(base, new)
                changed = True
                break
            if changed:
                break
    return e


def _plain_add(a: Expr, b: Expr) -> Expr:
    t = dict(a.terms)
    for m, c in b.terms.items():
        s = t.get(m, 0) + c
        if s:
            t[m] = s
        else:
            t.pop(m, None)
    return Expr(t)


def _symbolic_power(base: Expr, n: Expr) -> Expr:
    if len(base.terms) == 1:
        (m, c), = base.terms.items()
        if c == 1 and len(m) == 1 and m[0][1] == 1 and m[0][0].rank == _FUNC and m[0][0].is_exp:
            return exp(m[0][0].args[0] * n)
    raise ValueError("symbolic exponents are only supported on exp(...)")


# ---------------------------------------------------------------- constructors

def const(q) -> Expr:
    return Expr.const(q)


def sym(a: Atom) -> Expr:
    return Expr.atom(a)


def indep(name: str) -> Expr:
    return Expr.atom(IndepVar(name))


def jet(var: str, *index: str) -> Expr:
    return Expr.atom(Jet(var, index))


def param(name: str, role: str = GENERIC) -> Expr:
    return Expr.atom(Parameter(name, role))


def aux(name: str) -> Expr:
    return Expr.atom(AuxVar(name))


def func(name: str, *args, derivs=None) -> Expr:
    """Apply a builtin or opaque function, folding sin(0), cos(0), exp(0), ln(1), tan(0)."""
    args = tuple(_coerce(a) for a in args)
    if name in BUILTINS:
        if len(args) != 1:
            raise TypeError(f"{name} takes one argument")
        (arg,) = args
        if arg.is_const():
            v = arg.const_value()
            if v == 0 and name in ("sin", "tan"):
                return ZERO
            if v == 0 and name in ("cos", "exp"):
                return ONE
            if v == 1 and name == "ln":
                return ZERO
        return Expr.atom(Func(name, args))
    return Expr.atom(Func(name, args, derivs))


def sin(a) -> Expr:
    return func("sin", a)


def cos(a) -> Expr:
    return func("cos", a)


def tan(a) -> Expr:
    return func("tan", a)


def exp(a) -> Expr:
    return func("exp", a)


def ln(a) -> Expr:
    return func("ln", a)


# ---------------------------------------------------------------- differentiation

_MISSING = object()


def _atom_derivative(a: Atom, leaf, memo, target):
    if _is_leaf(a):
        return leaf(a)
    if target is not None and not any(x.contains(target) for x in a.inner()):
        return None
    if a.rank == _SUMPOW:
        d = derive(a.base, leaf, memo, target)
        return d if d.terms else None
    # function application
    if a.builtin:
        arg = a.args[0]
        da = derive(arg, leaf, memo, target)
        if not da.terms:
            return None
        if a.name == "sin":
            outer = cos(arg)
        elif a.name == "cos":
            outer = -sin(arg)
        elif a.name == "tan":
            outer = ONE + tan(arg) ** 2
        elif a.name == "exp":
            outer = Expr.atom(a)
        else:
            outer = arg ** -1
        return outer * da
    total = ZERO
    for k, arg in enumerate(a.args):
        da = derive(arg, leaf, memo, target)
        if not da.terms:
            continue
        derivs = list(a.derivs)
        derivs[k] += 1
        total = total + Expr.atom(Func(a.name, a.args, tuple(derivs))) * da
    return total if total.terms else None


def derive(e: Expr, leaf: Callable[[Atom], Expr | None], memo: dict, target: Atom | None = None) -> Expr:
    """Apply the derivation determined by its values ``leaf(a)`` on leaf atoms.

    Products, powers and function applications follow the Leibniz and chain
    rules.  ``memo`` caches atom derivatives across calls sharing one leaf map.
    """
    acc: dict = {}
    pieces = []
    for m, c in e.terms.items():
        for k, (a, ex) in enumerate(m):
            da = memo.get(a, _MISSING)
            if da is _MISSING:
                da = _atom_derivative(a, leaf, memo, target)
                memo[a] = da
            if da is None:
                continue
            ne = ex - 1
            rest = m[:k] + ((a, _norm_exp(ne)),) + m[k + 1:] if ne != 0 else m[:k] + m[k + 1:]
            coef = c * ex
            if len(da.terms) == 1 and () in da.terms:
                acc[rest] = acc.get(rest, 0) + coef * da.terms[()]
            else:
                pieces.append((rest, coef, da))
    out = Expr({k: v for k, v in acc.items() if v})
    for rest, coef, da in pieces:
        out = out + Expr({rest: coef}) * da
    return out


# ---------------------------------------------------------------- substitution

def _rebuild(a: Atom, bindings: Mapping, memo: dict) -> Expr:
    if a.rank == _SUMPOW:
        return _subs(a.base, bindings, memo)
    args = tuple(_subs(x, bindings, memo) for x in a.args)
    if a.builtin:
        return func(a.name, *args)
    return Expr.atom(Func(a.name, args, a.derivs))


def _subs(e: Expr, bindings: Mapping, memo: dict) -> Expr:
    keys = memo.setdefault(_KEYS, frozenset(bindings))
    if e.deep_atoms().isdisjoint(keys):
        return e
    out = ZERO
    plain: dict = {}
    for m, c in e.terms.items():
        kept = {}
        factor = None
        for a, ex in m:
            if a in bindings:
                v = bindings[a] ** ex
            elif a.composite and any(not x.deep_atoms().isdisjoint(keys) for x in a.inner()):
                r = memo.get(a)
                if r is None:
                    r = _rebuild(a, bindings, memo)
                    memo[a] = r
                v = r ** ex
            else:
                kept[a] = ex
                continue
            factor = v if factor is None else factor * v
        if factor is None:
            plain[m] = plain.get(m, 0) + c
        else:
            base = Expr({_finish_mono(kept): c}) if kept else Expr.const(c)
            out = out + base * factor
    return out + Expr({k: v for k, v in plain.items() if v})


_KEYS = object()


def _check_acyclic(bindings: Mapping):
    graph = {k: [j for j in bindings if j in _coerce(v).deep_atoms()] for k, v in bindings.items()}
    state: dict = {}

    def visit(n):
        state[n] = 1
        for j in graph[n]:
            if state.get(j) == 1:
                raise CyclicBinding(f"cyclic substitution through {j.text()}")
            if j not in state:
                visit(j)
        state[n] = 2

    for n in graph:
        if n not in state:
            visit(n)


def substitute(e: Expr, bindings: Mapping, check_cycles: bool = True) -> Expr:
    """Simultaneously replace atoms by expressions.

    Keys are atoms (jets, aux variables, parameters, independent variables,
    opaque function applications).  A string key maps a dependent-variable
    name to another name and renames every jet of it (v -> u keeps the index).
    """
    renames = {k: v for k, v in bindings.items() if isinstance(k, str)}
    atom_map = {k: _coerce(v) for k, v in bindings.items() if not isinstance(k, str)}
    if check_cycles and atom_map:
        _check_acyclic(atom_map)
    if renames:
        e = rename_vars(e, renames)
    if not atom_map:
        return e
    return _subs(e, atom_map, {})


def rename_vars(e: Expr, renames: Mapping[str, str]) -> Expr:
    """Jet-prefix rewrite: every jet of ``v`` becomes the jet of ``renames[v]`` with the same index."""
    m = {a: Expr.atom(Jet(renames[a.var], a.index)) for a in e.deep_atoms()
         if a.rank == _JET and a.var in renames}
    return _subs(e, m, {}) if m else e


# ---------------------------------------------------------------- canonical form & checks

def canonicalize(e: Expr, space: "Space | None" = None) -> Expr:
    """Return the canonical form of e.

    Expressions are canonical by construction, so this is the identity apart
    from validating jet coordinates against ``space`` when one is given.
    """
    if space is not None:
        for a in e.deep_atoms():
            if a.rank == _JET:
                if a.var not in space.all_dep:
                    raise UndeclaredIndex(f"jet of undeclared variable {a.var!r}")
                for n in a.index:
                    if n not in space.indep:
                        raise UndeclaredIndex(f"{a.text()}: {n!r} is not an independent variable")
    return e


# ---------------------------------------------------------------- numeric evaluation

_config = {"seed": 20240531, "points": 16}


def set_default_seed(seed: int | None):
    """Seed used by randomized zero tests; 0 requests OS entropy."""
    _config["seed"] = seed


def default_seed():
    return _config["seed"]


@contextlib.contextmanager
def seeded(seed):
    old = _config["seed"]
    _config["seed"] = seed
    try:
        yield
    finally:
        _config["seed"] = old


def sample_values(rng, n: int) -> np.ndarray:
    """Uniform draws from [-2, -0.1] U [0.1, 2]."""
    mag = rng.uniform(0.1, 2.0, n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return mag * sign


class _Evaluator:
    def __init__(self, env: dict, n: int):
        self.env = env
        self.n = n
        self.cache: dict = {}
        self.bad = np.zeros(n, dtype=bool)

    def atom(self, a: Atom):
        v = self.cache.get(a)
        if v is not None:
            return v
        if a in self.env:
            v = self.env[a]
        elif a.rank == _SUMPOW:
            v = self.expr(a.base)[0]
        elif a.rank == _FUNC and a.builtin:
            x = self.expr(a.args[0])[0]
            with np.errstate(all="ignore"):
                if a.name == "sin":
                    v = np.sin(x)
                elif a.name == "cos":
                    v = np.cos(x)
                elif a.name == "tan":
                    self.bad |= np.abs(np.cos(x)) < 1e-6
                    v = np.tan(x)
                elif a.name == "exp":
                    self.bad |= x > 600
                    v = np.exp(np.minimum(x, 600))
                else:
                    ax = np.abs(x)
                    self.bad |= ax < 1e-8
                    v = np.log(np.where(ax < 1e-300, 1.0, ax))
        else:
            raise KeyError(a)
        self.cache[a] = v
        return v

    def power(self, a: Atom, e):
        v = self.atom(a)
        if e == 1:
            return v
        with np.errstate(all="ignore"):
            if e < 0:
                self.bad |= np.abs(v) < 1e-8
            if isinstance(e, Fraction) and e.denominator != 1:
                self.bad |= v < 0
                return np.abs(v) ** float(e)
            return v ** float(e)

    def expr(self, e: Expr):
        total = np.zeros(self.n)
        mag = np.zeros(self.n)
        for m, c in e.terms.items():
            t = np.full(self.n, float(c))
            for a, ex in m:
                t = t * self.power(a, ex)
            total = total + t
            mag = np.maximum(mag, np.abs(t))
        return total, mag


def evaluate(e: Expr, env: Mapping) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate on arrays of leaf values.  Returns (value, magnitude, singular_mask)."""
    n = len(next(iter(env.values()))) if env else 1
    ev = _Evaluator(dict(env), n)
    val, mag = ev.expr(e)
    bad = ev.bad | ~np.isfinite(val)
    return val, mag, bad


def _rng(seed):
    if seed is None:
        seed = _config["seed"]
    return np.random.default_rng(None if seed == 0 else seed)


def random_env(atoms: Iterable[Atom], n: int, rng) -> dict:
    return {a: sample_values(rng, n) for a in sorted(atoms, key=lambda a: a.key)}


def is_zero(e: Expr, mode: str = "randomized", *, points: int | None = None,
            seed: int | None = None, tol: float = 1e-9) -> bool:
    """Zero test.

    structural: the canonical form is the literal 0.
    randomized: |e| < tol * (1 + largest term magnitude) at every one of
    ``points`` random points; points hitting a singular denominator, ln or tan
    argument are redrawn up to 8 times before EvaluationSingularity is raised.
    """
    if not e.terms:
        return True
    if mode == "structural":
        return False
    if mode != "randomized":
        raise ValueError(f"unknown zero-test mode {mode!r}")
    if e.is_const():
        return False
    n = points or _config["points"]
    rng = _rng(seed)
    leaves = sorted(e.leaves(), key=lambda a: a.key)
    env = random_env(leaves, n, rng)
    for _ in range(9):
        val, mag, bad = evaluate(e, env)
        if not bad.any():
            break
        for a in leaves:
            env[a] = env[a].copy()
            env[a][bad] = sample_values(rng, int(bad.sum()))
    else:
        raise EvaluationSingularity(f"could not find regular sample points for {to_text(e)[:80]}")
    return bool(np.all(np.abs(val) < tol * (1.0 + mag)))


def numeric(e: Expr, point: Mapping[Atom, float]) -> float:
    """Evaluate at a single point given as {atom: float}."""
    env = {a: np.array([float(v)]) for a, v in point.items()}
    val, _, bad = evaluate(e, env)
    if bad.any():
        raise EvaluationSingularity("singular point")
    return float(val[0])


# ---------------------------------------------------------------- printing

def _exp_text(e) -> str:
    e = _norm_exp(e)
    if isinstance(e, int) and e >= 0:
        return str(e)
    return f"({e})"


def _factor_text(a: Atom, e) -> str:
    base = a.text()
    if e == 1:
        return base
    return f"{base}^{_exp_text(e)}"


def _term_text(m: tuple, c: Fraction) -> tuple[str, bool]:
    """Text of |c|*m and whether the sign is negative."""
    neg = c < 0
    c = abs(c)
    num = [_factor_text(a, e) for a, e in m if e > 0]
    den = [_factor_text(a, -e) for a, e in m if e < 0]
    if c.numerator != 1 or not num:
        num.insert(0, str(c.numerator))
    if c.denominator != 1:
        den.insert(0, str(c.denominator))
    s = "*".join(num)
    if den:
        s += "/" + (den[0] if len(den) == 1 else "(" + "*".join(den) + ")")
    return s, neg


def _print_order(m: tuple):
    return (sum(1 for _ in m) == 0, _mono_key(m))


def to_text(e: Expr) -> str:
    """Render in the parser's grammar, so the output parses back to the same Expr."""
    if not e.terms:
        return "0"
    parts = []
    for i, (m, c) in enumerate(sorted(e.terms.items(), key=lambda p: _print_order(p[0]))):
        s, neg = _term_text(m, c)
        if i == 0:
            parts.append("-" + s if neg else s)
        else:
            parts.append((" - " if neg else " + ") + s)
    return "".join(parts)


# ---------------------------------------------------------------- declaration context

class Space:
    """Declared names: independent, dependent (original and adjoint), parameters,
    auxiliary variables and opaque functions."""

    def __init__(self, indep: Iterable[str], dep: Iterable[str], adjoint: Iterable[str] = (),
                 params: Mapping[str, str] | None = None, aux: Iterable[str] = (),
                 funcs: Iterable[str] = ()):
        self.indep = tuple(indep)
        self.dep = tuple(dep)
        self.adjoint = tuple(adjoint)
        self.params = dict(params or {})
        self.aux = tuple(aux)
        self.funcs = tuple(funcs)

    @property
    def all_dep(self) -> tuple:
        return self.dep + self.adjoint

    def names(self) -> set:
        return set(self.indep) | set(self.dep) | set(self.adjoint) | set(self.params) | set(self.aux) | set(self.funcs)

    def with_vars(self, dep=None, adjoint=None) -> "Space":
        return Space(self.indep, self.dep if dep is None else dep,
                     self.adjoint if adjoint is None else adjoint,
                     self.params, self.aux, self.funcs)

    def x(self, name: str) -> Expr:
        return indep(name)

    def p(self, name: str) -> Expr:
        return param(name, self.params.get(name, GENERIC))

    def small_parameter(self) -> Parameter | None:
        for n, r in self.params.items():
            if r == SMALL:
                return Parameter(n, SMALL)
        return None
