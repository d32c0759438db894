"""Expression grammar and the sectioned problem-document format.

Expression grammar (lowest to highest precedence)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := primary ('^' exponent)?        right associative
    primary := number | name | name '(' args ')' | '(' sum ')'

Jets are written ``u_t``, ``u_xxt`` or ``u_{t,x1}``; with one independent
variable ``y'`` and ``y''`` are accepted as well.  Opaque functions declared in
``[functions]`` may carry primes, ``k'(u)``, or explicit per-argument
derivative counts, ``phi'{0,1}(t, x)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as X
from .calculus import Generator, NonlocalRules
from .errors import (
    DuplicateSection,
    InputError,
    MalformedIndex,
    MissingLeadingDerivative,
    SyntaxError,
    UndeclaredName,
)
from .expr import Expr, Jet, Space

ROLE_ALIASES = {
    "small": X.SMALL, "smallparameter": X.SMALL, "eps": X.SMALL,
    "const": X.GENERIC, "generic": X.GENERIC, "genericconstant": X.GENERIC,
    "coef": X.COEF, "undetermined": X.COEF, "undeterminedcoefficient": X.COEF,
}

_FUNCTION_ALIASES = {"log": "ln"}

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<name>[A-Za-z][A-Za-z0-9]*(?:_(?:\{[^}]*\}|[A-Za-z0-9]+))?)
  | (?P<primes>'+(?:\{[0-9,\s]*\})?)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, col0: int) -> list:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SyntaxError(f"unexpected character {text[pos]!r}", line, col0 + pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), col0 + pos + 1))
        pos = m.end()
    out.append(_Tok("end", "", col0 + len(text) + 1))
    return out


class _Parser:
    def __init__(self, text: str, space: Space, line: int = 1, col: int = 0):
        self.space = space
        self.line = line
        self.toks = _tokenize(text, line, col)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return SyntaxError(msg, self.line, tok.col)

    def expect(self, text):
        t = self.take()
        if t.text != text:
            raise self.error(f"expected {text!r}, found {t.text or 'end of input'!r}", t)
        return t

    def parse(self) -> Expr:
        e = self.sum()
        if self.peek().kind != "end":
            raise self.error(f"unexpected {self.peek().text!r}")
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            r = self.product()
            e = e + r if op == "+" else e - r
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            r = self.unary()
            if op == "*":
                e = e * r
            else:
                if not r.terms:
                    raise self.error("division by zero")
                e = e / r
        return e

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.take()
            return -self.unary()
        if self.peek().text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek().text == "^":
            self.take()
            ex = self.exponent()
            return base ** ex
        return base

    def exponent(self) -> Expr:
        if self.peek().text == "-":
            self.take()
            return -self.exponent()
        return self.power()

    def primary(self) -> Expr:
        t = self.take()
        if t.kind == "num":
            return Expr.const(Fraction(t.text))
        if t.text == "(":
            e = self.sum()
            self.expect(")")
            return e
        if t.kind == "name":
            return self.name(t)
        raise self.error(f"unexpected {t.text or 'end of input'!r}", t)

    def args(self) -> list:
        self.expect("(")
        out = [self.sum()]
        while self.peek().text == ",":
            self.take()
            out.append(self.sum())
        self.expect(")")
        return out

    def name(self, t: _Tok) -> Expr:
        sp = self.space
        text = t.text
        base, _, suffix = text.partition("_")
        primes = self.take().text if self.peek().kind == "primes" else ""
        if base in sp.all_dep and suffix and text not in sp.names():
            if primes:
                raise self.error("primes cannot follow a subscripted jet", t)
            return Expr.atom(Jet(base, self.index(suffix, t)))
        if text in sp.all_dep:
            if primes:
                if len(sp.indep) != 1:
                    raise MalformedIndex(f"{text}{primes}: primes need exactly one independent variable")
                if "{" in primes:
                    raise self.error("derivative counts apply to functions only", t)
                return Expr.atom(Jet(text, (sp.indep[0],) * len(primes)))
            return Expr.atom(Jet(text, ()))
        fname = _FUNCTION_ALIASES.get(text, text)
        if fname in X.BUILTINS or fname == "sqrt" or text in sp.funcs:
            if self.peek().text != "(":
                raise self.error(f"function {text} needs arguments", t)
            args = self.args()
            if fname == "sqrt":
                if len(args) != 1:
                    raise self.error("sqrt takes one argument", t)
                return args[0] ** Fraction(1, 2)
            if fname in X.BUILTINS:
                if primes:
                    raise self.error("primes on builtin functions are not supported", t)
                if len(args) != 1:
                    raise self.error(f"{fname} takes one argument", t)
                return X.func(fname, args[0])
            derivs = self.derivs(primes, len(args), t)
            return X.func(text, *args, derivs=derivs)
        if primes:
            raise self.error(f"primes on {text!r}", t)
        if text in sp.indep:
            return X.indep(text)
        if text in sp.params:
            return X.param(text, sp.params[text])
        if text in sp.aux:
            return X.aux(text)
        if base in sp.all_dep and suffix:
            return Expr.atom(Jet(base, self.index(suffix, t)))
        raise UndeclaredName(f"line {self.line}, column {t.col}: undeclared name {text!r}")

    def derivs(self, primes: str, n: int, t: _Tok):
        if not primes:
            return None
        if "{" in primes:
            body = primes[primes.index("{") + 1:-1]
            counts = tuple(int(x) for x in body.split(",") if x.strip())
            if len(counts) != n:
                raise self.error("derivative counts do not match the argument count", t)
            return counts
        if n != 1:
            raise self.error("primes need a one-argument function; use f'{..}(...)", t)
        return (len(primes),)

    def index(self, suffix: str, t: _Tok) -> tuple:
        indep = self.space.indep
        if suffix.startswith("{"):
            body = suffix[1:-1].strip()
            parts = [p.strip() for p in body.split(",")] if "," in body else (
                [body] if body in indep else list(body))
        elif suffix in indep:
            parts = [suffix]
        else:
            parts = list(suffix)
        for p in parts:
            if p not in indep:
                raise MalformedIndex(f"line {self.line}, column {t.col}: {p!r} in {t.text!r} "
                                     "is not an independent variable")
        return tuple(parts)


def parse_expr(text: str, ctx: Space, line: int = 1, col: int = 0) -> Expr:
    """Parse one expression in the declaration context ``ctx``."""
    return X.canonicalize(_Parser(text, ctx, line, col).parse(), ctx)


# ---------------------------------------------------------------- documents

@dataclass
class EquationSpec:
    name: str
    expr: Expr
    lead: Jet
    text: str = ""


@dataclass
class SubstitutionSpec:
    name: str
    mapping: dict
    dependency_class: str = "pointwise"
    order: int = 0


@dataclass
class ProblemDocument:
    space: Space
    equations: list = field(default_factory=list)
    rules: NonlocalRules = field(default_factory=NonlocalRules)
    symmetries: dict = field(default_factory=dict)
    substitutions: dict = field(default_factory=dict)
    ansatz: dict = field(default_factory=dict)
    vectors: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    source: str = ""

    @property
    def independent_vars(self):
        return self.space.indep

    @property
    def dependent_vars(self):
        return self.space.dep

    def system(self):
        from .adjoint import ProblemSystem
        return ProblemSystem(
            space=self.space,
            equations=[e.expr for e in self.equations],
            leading=[e.lead for e in self.equations],
            rules=self.rules,
            names=[e.name for e in self.equations],
        )

    def expr(self, text: str) -> Expr:
        return parse_expr(text, self.space)

    def substitution(self, name: str):
        """The named substitution as an engine value."""
        from .selfadjoint import Substitution
        if name not in self.substitutions:
            raise InputError(f"no substitution named {name!r}")
        s = self.substitutions[name]
        return Substitution(s.mapping, s.dependency_class, s.order, name)

    def vector(self, name: str):
        from .conslaw import as_vector
        if name not in self.vectors:
            raise InputError(f"no vector named {name!r}")
        return as_vector(self.system(), self.vectors[name])


@dataclass
class _Section:
    kind: str
    name: str
    line: int
    entries: list = field(default_factory=list)  # (key, value, line, col)


_HEADER = re.compile(r"^\[\s*([A-Za-z_-]+)(?:\s+([^\]]+?))?\s*\]\s*$")
_KEY_SPLIT = re.compile(r",\s*(?=[A-Za-z_][\w']*\s*=)")
_NONLOCAL_SPLIT = re.compile(r",\s*(?=d/d)")

_NAMED = {"equation", "symmetry", "substitution", "ansatz", "vector"}
_SINGLE = {"vars", "params", "nonlocal", "functions", "meta"}


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def _sections(doc: str) -> list:
    sections: list = []
    current = None
    last_entry_line = None
    for n, raw in enumerate(doc.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        m = _HEADER.match(line.strip())
        if m:
            kind = m.group(1).lower()
            name = (m.group(2) or "").strip()
            if kind not in _NAMED | _SINGLE:
                raise SyntaxError(f"unknown section [{kind}]", n, 1)
            if kind in _NAMED and not name:
                raise SyntaxError(f"section [{kind}] needs a name", n, 1)
            for s in sections:
                if s.kind == kind and s.name == name:
                    raise DuplicateSection(f"line {n}: duplicate section [{kind}{' ' + name if name else ''}]")
            current = _Section(kind, name, n)
            sections.append(current)
            last_entry_line = None
            continue
        if current is None:
            raise SyntaxError("content before the first section", n, 1)
        if raw[:1].isspace() and current.entries and last_entry_line is not None:
            k, v, ln, col = current.entries[-1]
            current.entries[-1] = (k, v + " " + line.strip(), ln, col)
            continue
        current.entries.append((None, line.rstrip(), n, len(line) - len(line.lstrip())))
        last_entry_line = n
    return sections


def _pairs(entries, splitter=_KEY_SPLIT, sep="="):
    """Split raw lines into (key, value, line, col) pairs."""
    out = []
    for _, text, line, col in entries:
        for part in splitter.split(text.strip()):
            if sep not in part:
                raise SyntaxError(f"expected 'key {sep} value' in {part!r}", line, col + 1)
            k, v = part.split(sep, 1)
            out.append((k.strip(), v.strip(), line, col + text.find(v.strip()) if v.strip() else col))
    return out


def _names(value: str) -> list:
    return [x.strip() for x in value.split(",") if x.strip()]


def _parse_params(entries) -> dict:
    out = {}
    for _, text, line, col in entries:
        body = text.strip()
        if "=" in body:
            key, body = body.split("=", 1)
            if key.strip() not in ("names", "params"):
                raise SyntaxError(f"unexpected key {key.strip()!r} in [params]", line, col + 1)
        for item in _names(body):
            name, _, role = item.partition(":")
            role = role.strip().lower() or "generic"
            if role not in ROLE_ALIASES:
                raise InputError(f"line {line}: unknown parameter role {role!r}")
            out[name.strip()] = ROLE_ALIASES[role]
    return out


def parse_problem(doc: str) -> ProblemDocument:
    """Parse a sectioned problem document."""
    sections = _sections(doc)
    single = {s.kind: s for s in sections if s.kind in _SINGLE}

    indep: list = []
    dep: list = []
    adjoint: list = []
    if "vars" in single:
        for k, v, line, _ in _pairs(single["vars"].entries):
            if k in ("independent", "indep"):
                indep = _names(v)
            elif k in ("dependent", "dep"):
                dep = _names(v)
            elif k in ("adjoint", "adj"):
                adjoint = _names(v)
            else:
                raise SyntaxError(f"unknown key {k!r} in [vars]", line, 1)
    if not indep or not dep:
        raise InputError("[vars] must declare independent and dependent variables")
    params = _parse_params(single["params"].entries) if "params" in single else {}
    if sum(1 for r in params.values() if r == X.SMALL) > 1:
        raise InputError("at most one parameter may be the small parameter")
    funcs: list = []
    if "functions" in single:
        for k, v, line, _ in _pairs(single["functions"].entries):
            funcs += _names(v)
    meta = {}
    if "meta" in single:
        for k, v, _, _ in _pairs(single["meta"].entries, splitter=re.compile(r"$^")):
            meta[k] = v

    rule_text: dict = {}
    if "nonlocal" in single:
        for _, text, line, col in single["nonlocal"].entries:
            if ":" not in text:
                raise SyntaxError("expected 'name: d/dx = ..., d/dt = ...'", line, col + 1)
            name, body = text.split(":", 1)
            name = name.strip()
            rows = {}
            for part in _NONLOCAL_SPLIT.split(body.strip()):
                m = re.match(r"d/d([A-Za-z][A-Za-z0-9]*)\s*=\s*(.*)$", part.strip())
                if not m:
                    raise SyntaxError(f"bad nonlocal rule {part.strip()!r}", line, col + 1)
                rows[m.group(1)] = (m.group(2), line)
            rule_text[name] = rows

    eq_sections = [s for s in sections if s.kind == "equation"]
    if not adjoint:
        if len(eq_sections) == 1 and "v" not in set(indep) | set(dep) | set(params) | set(funcs) | set(rule_text):
            adjoint = ["v"]
        else:
            adjoint = [f"v{k + 1}" for k in range(len(eq_sections))]
    if len(adjoint) != len(eq_sections):
        raise InputError(f"{len(adjoint)} adjoint names for {len(eq_sections)} equations")

    all_names = indep + dep + adjoint + list(params) + funcs + list(rule_text)
    seen = set()
    for n in all_names:
        if n in seen:
            raise InputError(f"name {n!r} is declared twice")
        if n in X.BUILTINS or n in ("sqrt", "log"):
            raise InputError(f"name {n!r} is reserved")
        seen.add(n)

    space = Space(indep, dep, adjoint, params, list(rule_text), funcs)
    pdoc = ProblemDocument(space=space, meta=meta, source=doc)

    rules = {}
    for name, rows in rule_text.items():
        for i, (text, line) in rows.items():
            if i not in indep:
                raise MalformedIndex(f"line {line}: d/d{i} is not an independent variable")
            rules.setdefault(name, {})[i] = parse_expr(text, space, line)
    pdoc.rules = NonlocalRules.of(rules)

    for s in eq_sections:
        kv = {k: (v, line, col) for k, v, line, col in _pairs(s.entries)}
        if "expr" not in kv:
            raise SyntaxError(f"[equation {s.name}] needs expr", s.line, 1)
        e = parse_expr(kv["expr"][0], space, kv["expr"][1], kv["expr"][2])
        if "lead" not in kv:
            raise MissingLeadingDerivative(f"[equation {s.name}] has no lead")
        lead_e = parse_expr(kv["lead"][0], space, kv["lead"][1], kv["lead"][2])
        atoms = lead_e.atoms()
        if len(lead_e.terms) != 1 or len(atoms) != 1 or not isinstance(next(iter(atoms)), Jet):
            raise MissingLeadingDerivative(f"[equation {s.name}] lead must be a single jet coordinate")
        lead = next(iter(atoms))
        if lead.var not in dep:
            raise MissingLeadingDerivative(f"[equation {s.name}] lead {lead.text()} is not a dependent-variable jet")
        if lead not in e.deep_atoms():
            raise MissingLeadingDerivative(f"[equation {s.name}] lead {lead.text()} does not occur in the equation")
        pdoc.equations.append(EquationSpec(s.name, e, lead, kv["expr"][0]))

    for s in sections:
        if s.kind == "symmetry":
            g = Generator(name=s.name)
            for k, v, line, col in _pairs(s.entries):
                kind, _, var = k.partition("_")
                e = parse_expr(v, space, line, col)
                if kind == "xi" and var in indep:
                    g.xi[var] = e
                elif kind == "eta" and var in dep:
                    g.eta[var] = e
                else:
                    raise SyntaxError(f"unknown generator key {k!r}", line, 1)
            for d in dep:
                g.eta.setdefault(d, X.ZERO)
            pdoc.symmetries[s.name] = g
        elif s.kind == "substitution":
            mapping = {}
            cls, order = "pointwise", 0
            for k, v, line, col in _pairs(s.entries):
                if k == "class":
                    cls, order = _parse_class(v, line)
                elif k in adjoint:
                    mapping[k] = parse_expr(v, space, line, col)
                else:
                    raise UndeclaredName(f"line {line}: {k!r} is not an adjoint variable")
            pdoc.substitutions[s.name] = SubstitutionSpec(s.name, mapping, cls, order)
        elif s.kind == "ansatz":
            pdoc.ansatz[s.name] = {k: v for k, v, _, _ in _pairs(s.entries)}
        elif s.kind == "vector":
            comps = {}
            for k, v, line, col in _pairs(s.entries):
                kind, _, var = k.partition("_")
                if kind != "C" or var not in indep:
                    raise SyntaxError(f"vector keys are C_<independent variable>, got {k!r}", line, 1)
                comps[var] = parse_expr(v, space, line, col)
            pdoc.vectors[s.name] = comps
    return pdoc


_CLASSES = ("constant", "u-only", "pointwise", "differential")


def _parse_class(v: str, line: int):
    v = v.strip()
    m = re.match(r"differential\s*\(\s*(\d+)\s*\)$", v)
    if m:
        return "differential", int(m.group(1))
    if v in ("quasi",):
        return "u-only", 0
    if v not in _CLASSES:
        raise InputError(f"line {line}: unknown dependency class {v!r}")
    return v, 1 if v == "differential" else 0


def load_problem(path) -> ProblemDocument:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())
