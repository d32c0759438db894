"""Exception and warning types raised by the engine.

Input problems (bad documents, undeclared names, ill-posed systems) derive
from InputError; the CLI maps them to exit code 2.
"""

import builtins


class AdjforgeError(Exception):
    """Base class for every engine error."""


class InputError(AdjforgeError):
    pass


class SyntaxError(InputError, builtins.SyntaxError):
    """Parse failure with a 1-based line and column."""

    def __init__(self, message, line=1, column=1):
        self.message = message
        self.line = line
        self.column = column
        Exception.__init__(self, f"{message} (line {line}, column {column})")

    def __str__(self):
        return f"{self.message} (line {self.line}, column {self.column})"


class UndeclaredName(InputError):
    pass


class MalformedIndex(InputError):
    pass


class DuplicateSection(InputError):
    pass


class MissingLeadingDerivative(InputError):
    pass


class UndeclaredIndex(InputError):
    pass


class CyclicBinding(InputError):
    pass


class LinearAnsatzViolation(InputError):
    """Two undetermined coefficients multiplied while linear-ansatz mode is on."""


class MissingNonlocalRule(InputError):
    pass


class NotLinear(InputError):
    pass


class NonEliminable(InputError):
    pass


class SplitFailure(AdjforgeError):
    pass


class NotIntegratingFactor(AdjforgeError):
    pass


class EvaluationSingularity(AdjforgeError):
    pass


class AnsatzInsufficient(UserWarning):
    pass


class DivisionByZeroAtU0(UserWarning):
    pass
