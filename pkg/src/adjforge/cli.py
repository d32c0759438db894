"""Command-line front end.

Exit codes: 0 success, 1 analysis-negative outcome, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import approx as A
from . import conslaw as CL
from . import expr as X
from . import ode as O
from .adjoint import adjoint_system
from .calculus import NonlocalRules, is_divergence
from .errors import AdjforgeError, InputError
from .expr import Space
from .parser import load_problem, parse_expr
from .selfadjoint import Substitution, determining_system, solve_determining, verify_substitution

OK, NEGATIVE, INPUT = 0, 1, 2


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0.1.0"


@dataclass
class AnalysisReport:
    command: str
    problem: str = ""
    status: int = OK
    records: list = field(default_factory=list)
    seconds: float = 0.0
    version: str = field(default_factory=_version)

    def add(self, kind: str, **values):
        self.records.append({"kind": kind, **values})

    def to_jsonl(self) -> str:
        head = {"type": "report", **{k: v for k, v in asdict(self).items() if k != "records"}}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps({"type": "record", **r}, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "AnalysisReport":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        head = dict(rows[0])
        head.pop("type")
        records = []
        for r in rows[1:]:
            r = dict(r)
            r.pop("type")
            records.append(r)
        return cls(records=records, **head)

    def to_text(self) -> str:
        out = [f"{self.command}  {self.problem}".rstrip()]
        for r in self.records:
            keys = [k for k in r if k != "kind"]
            width = max((len(k) for k in keys), default=0)
            out.append(f"[{r['kind']}]")
            for k in keys:
                v = r[k]
                if isinstance(v, dict):
                    v = ", ".join(f"{a} = {b}" for a, b in v.items())
                elif isinstance(v, list):
                    v = "; ".join(str(x) for x in v)
                out.append(f"  {k.ljust(width)}  {v}")
        out.append(f"status {self.status}  ({self.seconds:.2f} s, adjforge {self.version})")
        return "\n".join(out) + "\n"


def _t(e) -> str:
    return X.to_text(e)


def _split_top(text: str) -> list:
    """Split at commas outside parentheses and braces."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "({[":
            depth += 1
        elif ch in ")}]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur).strip())
    return parts


def _load(path: str):
    p = Path(path)
    if not p.exists():
        from . import corpus
        alt = corpus.path(p.stem)
        if p.parent == Path(".") and alt.exists():
            p = alt
        else:
            raise InputError(f"no such problem file: {path}")
    return load_problem(p)


def _sub(doc, name: str) -> Substitution:
    return doc.substitution(name)


def _sym(doc, name: str):
    if name not in doc.symmetries:
        raise InputError(f"no symmetry named {name!r}")
    return doc.symmetries[name]


def _vec(doc, name: str):
    if name not in doc.vectors:
        raise InputError(f"no vector named {name!r}")
    return doc.vectors[name]


# ---------------------------------------------------------------- commands

def cmd_adjoint(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    sys_ = doc.system()
    for name, F in zip(sys_.names, adjoint_system(sys_)):
        rep.add("adjoint", equation=name, expr=_t(F))


def cmd_check_sa(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    sys_ = doc.system()
    if args.search:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sols = solve_determining(determining_system(sys_, args.cls), args.degree)
        for w in caught:
            rep.add("warning", message=str(w.message))
        if not sols:
            rep.add("search", dependency_class=args.cls, degree=args.degree, found=False)
            rep.status = NEGATIVE
        for s in sols:
            v = verify_substitution(sys_, s)
            rep.add("search", dependency_class=args.cls, degree=args.degree, found=True,
                    substitution={k: _t(e) for k, e in s.mapping.items()}, verified=v.passed)
            if not v.passed:
                rep.status = NEGATIVE
        return
    names = [args.sub] if args.sub else list(doc.substitutions)
    if not names:
        raise InputError("the document declares no substitution; use --search")
    for n in names:
        v = verify_substitution(sys_, _sub(doc, n))
        rep.add("verdict", substitution=n, passed=v.passed, cls=v.cls, residual=[_t(r) for r in v.residual])
        if not v.passed:
            rep.status = NEGATIVE


def _vector_record(rep, kind, cv, cert=None, **extra):
    rec = {"components": {i: _t(c) for i, c in cv.components.items()}, **extra}
    if cert is not None:
        rec["conserved"] = cert.passed
        rec["residual"] = _t(cert.residual)
        if cert.characteristic:
            rec["multipliers"] = [_t(m) for m in cert.characteristic]
    rep.add(kind, **rec)


def cmd_conslaw(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    sys_ = doc.system()
    try:
        cv = CL.conserved_vector(sys_, _sub(doc, args.sub), _sym(doc, args.symmetry), include_xi_L=args.keep_xi_l)
    except CL.SubstitutionRejected as e:
        rep.add("rejected", reason=str(e))
        rep.status = NEGATIVE
        return
    cert = CL.verify_conservation(cv, sys_)
    _vector_record(rep, "vector", cv, cert, symmetry=args.symmetry, substitution=args.sub)
    if not args.no_reduce:
        red = CL.reduce_triviality(cv, sys_)
        _vector_record(rep, "reduced", red, trivial=red.trivial)
    if not cert.passed:
        rep.status = NEGATIVE


def cmd_direct(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    sys_ = doc.system()
    mu = [doc.expr(t) for t in _split_top(args.mu)]
    ok = CL.direct_multiplier_test(sys_, mu)
    rep.add("direct", multipliers=[_t(m) for m in mu], passed=ok,
            residuals=[_t(r) for r in CL.direct_residuals(sys_, mu)])
    rep.status = OK if ok else NEGATIVE


def cmd_divtest(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    e = doc.expr(args.expr)
    ok = is_divergence(e, list(doc.space.dep) + list(doc.space.adjoint), doc.rules)
    rep.add("divtest", expr=_t(e), divergence=ok)
    rep.status = OK if ok else NEGATIVE


def _ode_context(args):
    doc = _load(args.file)
    s = doc.space
    aux, table = [], doc.rules.table()
    sp = Space(s.indep, s.dep, s.adjoint, s.params, tuple(s.aux) + tuple(n for n, _ in args.aux), s.funcs)
    for name, rule in args.aux:
        aux.append(name)
        table[name] = {s.indep[0]: parse_expr(rule, sp)}
    rules = NonlocalRules.of(table)
    sys_ = doc.system()
    if len(sys_.equations) != 1 or len(s.indep) != 1:
        raise InputError("ode commands take a single ordinary differential equation")
    ode = O.LinearODE.from_expr(sys_.equations[0], s.indep[0], s.dep[0], rules)
    if getattr(args, "rhs", None):
        ode.rhs = ode.rhs + parse_expr(args.rhs, sp)
    return doc, sp, ode


def _aux_arg(text: str):
    if ":" not in text:
        raise argparse.ArgumentTypeError("expected NAME: d/dx expression")
    name, rule = text.split(":", 1)
    return name.strip(), rule.strip()


def cmd_ode(args, rep: AnalysisReport):
    doc, sp, ode = _ode_context(args)
    rep.problem = doc.meta.get("anchor", args.file)
    z = doc.space.adjoint[0] if doc.space.adjoint else "z"
    if args.action == "adjoint":
        adj = O.ode_adjoint(ode, z)
        rep.add("ode-adjoint", operator=_t(ode.operator()), adjoint=_t(adj.operator()))
        return
    if not args.phi:
        raise InputError("--phi is required")
    phi = parse_expr(args.phi, sp)
    if args.action == "factor-check":
        c = O.integrating_factor_check(ode, phi)
        rep.add("factor-check", phi=_t(phi), divergence_route=c.divergence_route,
                adjoint_route=c.adjoint_route, passed=c.passed)
        rep.status = OK if c.passed else NEGATIVE
        return
    try:
        fi = O.reduce_order(ode, phi)
    except O.NotIntegratingFactor as e:
        rep.add("first-integral", phi=_t(phi), error=str(e))
        rep.status = NEGATIVE
        return
    rep.add("first-integral", phi=_t(phi), integral=fi.text(), verified=fi.verified,
            quadratures={k: _t(v) for k, v in fi.quadratures.items()})
    rep.status = OK if fi.verified else NEGATIVE


def cmd_approx(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    sys_ = doc.system()
    if sys_.small_parameter is None:
        rep.add("warning", message="no small parameter declared; results are exact")
    if args.action == "adjoint":
        for name, F in zip(sys_.names, A.approx_adjoint(sys_)):
            rep.add("approx-adjoint", equation=name, zeroth=_t(F.zeroth), first=_t(F.first))
        return
    if not args.sub:
        raise InputError("--sub is required")
    sub = _sub(doc, args.sub)
    if args.action == "check-sa":
        v = A.approx_verify_substitution(sys_, sub)
        rep.add("approx-verdict", substitution=args.sub, passed=v.passed,
                residual=[r.text() for r in v.residual])
        rep.status = OK if v.passed else NEGATIVE
        return
    if not args.symmetry:
        raise InputError("--symmetry is required")
    v = A.approx_conserved_vector(sys_, sub, _sym(doc, args.symmetry))
    rep.add("approx-vector", symmetry=args.symmetry, substitution=args.sub,
            components={i: c.text() for i, c in v.components.items()},
            residual=v.residual.text(), conserved=v.passed)
    rep.status = OK if v.passed else NEGATIVE


def cmd_constraints(args, rep: AnalysisReport):
    doc = _load(args.file)
    rep.problem = doc.meta.get("anchor", args.file)
    sys_ = doc.system()
    cv = CL.as_vector(sys_, _vec(doc, args.vector))
    cert = CL.verify_conservation(cv, sys_)
    r = CL.emit_constraints(sys_, cv)
    rep.add("constraints", vector=args.vector, conserved=cert.passed,
            constraints=[_t(c) for c in r.constraints], independent=r.expected_rank, note=r.note)
    if not cert.passed:
        rep.status = NEGATIVE


def cmd_corpus(args, rep: AnalysisReport):
    from . import suite
    results = suite.run(filter=args.filter, criterion=args.criterion)
    if not results:
        raise InputError(f"no corpus check matches {args.filter!r}")
    for r in results:
        rep.add("check", name=r.name, criterion=r.criterion, fixture=r.fixture, anchor=r.anchor,
                passed=r.passed, detail=r.detail)
    failed = sum(not r.passed for r in results)
    rep.add("summary", checks=len(results), failed=failed)
    rep.status = OK if not failed else NEGATIVE


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adjforge", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None,
                   help="seed of the randomized zero test (0 draws from entropy); overrides ADJFORGE_SEED")
    p.add_argument("--json", action="store_true", help="line-delimited JSON report")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("adjoint", help="print the adjoint system")
    a.add_argument("file")
    a.set_defaults(func=cmd_adjoint)

    a = sub.add_parser("check-sa", help="verify or search substitutions")
    a.add_argument("file")
    a.add_argument("--sub")
    a.add_argument("--search", action="store_true")
    a.add_argument("--class", dest="cls", default="pointwise",
                   choices=["constant", "u-only", "pointwise", "differential"])
    a.add_argument("--degree", type=int, default=3)
    a.set_defaults(func=cmd_check_sa)

    a = sub.add_parser("conslaw", help="conserved vector from a symmetry and a substitution")
    a.add_argument("file")
    a.add_argument("--symmetry", required=True)
    a.add_argument("--sub", required=True)
    a.add_argument("--keep-xi-l", action="store_true")
    a.add_argument("--no-reduce", action="store_true")
    a.set_defaults(func=cmd_conslaw)

    a = sub.add_parser("direct", help="direct multiplier test")
    a.add_argument("file")
    a.add_argument("--mu", required=True, help="comma separated, one per equation")
    a.set_defaults(func=cmd_direct)

    a = sub.add_parser("divtest", help="is an expression a total divergence")
    a.add_argument("file")
    a.add_argument("--expr", required=True)
    a.set_defaults(func=cmd_divtest)

    a = sub.add_parser("ode", help="linear ODE tools")
    a.add_argument("action", choices=["adjoint", "factor-check", "reduce"])
    a.add_argument("file")
    a.add_argument("--phi")
    a.add_argument("--rhs")
    a.add_argument("--aux", type=_aux_arg, action="append", default=[],
                   help="auxiliary quadrature 'NAME: derivative', e.g. 'E: P(x)*E'")
    a.set_defaults(func=cmd_ode)

    a = sub.add_parser("approx", help="first-order approximate analysis")
    a.add_argument("action", choices=["adjoint", "check-sa", "conslaw"])
    a.add_argument("file")
    a.add_argument("--sub")
    a.add_argument("--symmetry")
    a.set_defaults(func=cmd_approx)

    a = sub.add_parser("constraints", help="differential constraints from a conserved vector")
    a.add_argument("file")
    a.add_argument("--vector", required=True)
    a.set_defaults(func=cmd_constraints)

    a = sub.add_parser("corpus", help="bundled regression corpus")
    a.add_argument("action", choices=["run"])
    a.add_argument("--filter")
    a.add_argument("--criterion", type=int)
    a.set_defaults(func=cmd_corpus)
    return p


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ADJFORGE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"ADJFORGE_SEED must be an integer, got {env!r}")
    return X.default_seed()


def run(argv=None, out=None) -> tuple:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0), None
    rep = AnalysisReport(args.command if args.command not in ("ode", "approx", "corpus")
                         else f"{args.command} {args.action}")
    t = time.perf_counter()
    try:
        with X.seeded(_seed(args)):
            args.func(args, rep)
    except InputError as e:
        rep.add("error", type=type(e).__name__, message=str(e))
        rep.status = INPUT
    except AdjforgeError as e:
        rep.add("error", type=type(e).__name__, message=str(e))
        rep.status = NEGATIVE
    rep.seconds = round(time.perf_counter() - t, 4)
    out.write(rep.to_jsonl() if args.json else rep.to_text())
    return rep.status, rep


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
