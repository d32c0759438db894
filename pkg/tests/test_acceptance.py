"""Acceptance criteria 1-7.

Each criterion prints one PASS/FAIL line; under pytest the lines are
collected and repeated in the terminal summary.  Run directly with
``python3 tests/test_acceptance.py`` for the table alone.
"""

import sys
import time
from pathlib import Path

import pytest

from adjforge import suite

sys.path.insert(0, str(Path(__file__).parent))

import conftest  # noqa: E402,F401  (loads the seed-fixed hypothesis profile)
import test_properties as P  # noqa: E402

LINES = {}

TITLES = {
    1: "adjoint corpus",
    2: "self-adjointness verdict table",
    3: "conserved-vector corpus",
    4: "linear ODE suite",
    5: "approximate suite",
    6: "property suites",
    7: "negative controls",
}

PROPERTIES = [
    P.test_canonical_form_is_idempotent,
    P.test_total_derivatives_commute,
    P.test_leibniz_rule,
    P.test_euler_lagrange_annihilates_divergences,
    P.test_operator_identity,
    P.test_second_adjoint_of_linear_operator,
    P.test_solve_determining_is_sound,
]


def _corpus(n):
    results = suite.run(criterion=n)
    failed = [r for r in results if not r.passed]
    detail = f"{len(results)} checks" + (": " + "; ".join(f"{r.name} ({r.detail})" for r in failed) if failed else "")
    return bool(results) and not failed, detail


def _properties():
    failed = []
    for prop in PROPERTIES:
        try:
            prop()
        except Exception as e:  # a falsifying example is a failed criterion, not an error
            failed.append(f"{prop.__name__}: {type(e).__name__}")
    return not failed, f"{len(PROPERTIES)} suites x 1000 cases" + (": " + "; ".join(failed) if failed else "")


def evaluate(n):
    t = time.perf_counter()
    ok, detail = _properties() if n == 6 else _corpus(n)
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {TITLES[n]}  [{detail}, {time.perf_counter() - t:.1f}s]"
    LINES[n] = line
    print(line)
    return ok, line


@pytest.mark.parametrize("n", sorted(TITLES))
def test_criterion(n):
    ok, line = evaluate(n)
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(n)[0] for n in sorted(TITLES)]
    sys.exit(0 if all(results) else 1)
