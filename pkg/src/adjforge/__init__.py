"""Adjoint equations, nonlinear self-adjointness and conservation laws for
systems of differential equations."""

from .adjoint import ProblemSystem, adjoint_system, formal_lagrangian
from .approx import (
    EpsExpr,
    approx_adjoint,
    approx_conserved_vector,
    approx_determining_g,
    approx_verify_substitution,
    eps_truncate,
)
from .calculus import Generator, NonlocalRules, euler_lagrange, is_divergence, noether_flux, total_derivative
from .conslaw import (
    ConservedVector,
    conserved_vector,
    direct_multiplier_test,
    emit_constraints,
    equivalent,
    reduce_triviality,
    verify_conservation,
)
from .errors import AdjforgeError, InputError
from .expr import Expr, Space, canonicalize, is_zero, set_default_seed, to_text
from .ode import LinearODE, concomitant_psi, integrating_factor_check, ode_adjoint, reduce_order
from .parser import load_problem, parse_expr, parse_problem
from .selfadjoint import (
    Substitution,
    determining_system,
    on_shell_reduce,
    solve_determining,
    verify_substitution,
)

__version__ = "0.1.0"

__all__ = [
    "AdjforgeError", "ConservedVector", "EpsExpr", "Expr", "Generator", "InputError", "LinearODE",
    "NonlocalRules", "ProblemSystem", "Space", "Substitution", "adjoint_system", "approx_adjoint",
    "approx_conserved_vector", "approx_determining_g", "approx_verify_substitution", "canonicalize",
    "concomitant_psi", "conserved_vector", "determining_system", "direct_multiplier_test",
    "emit_constraints", "eps_truncate", "equivalent", "euler_lagrange", "formal_lagrangian",
    "integrating_factor_check", "is_divergence", "is_zero", "load_problem", "noether_flux",
    "ode_adjoint", "on_shell_reduce", "parse_expr", "parse_problem", "reduce_order",
    "reduce_triviality", "set_default_seed", "solve_determining", "to_text", "total_derivative",
    "verify_conservation", "verify_substitution",
]
