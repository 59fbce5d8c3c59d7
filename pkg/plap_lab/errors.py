"""Exception hierarchy for plap-lab.

Checks that can fail (hypotheses, barrier inequalities, sign classes) report
failures as data. Exceptions are reserved for violated preconditions and for
solvers that run out of budget.
"""

from __future__ import annotations

from typing import Any


class LabError(Exception):
    """Base class for every error raised by plap-lab."""


class InvalidArgument(LabError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(LabError):
    """The run configuration is missing, unreadable or invalid."""


class SingularEvaluation(LabError, ArithmeticError):
    """A singular reaction was evaluated at a zero argument."""


class ConvergenceFailure(LabError):
    """A solver exhausted its budget.

    Attributes:
        last: The last (or best) iterate, in whatever shape the solver works with.
        residual: Residual norm of ``last``.
    """

    def __init__(self, message: str, last: Any = None, residual: float = float("nan")):
        super().__init__(message)
        self.last = last
        self.residual = residual


class CalibrationFailure(LabError):
    """No barrier scaling constant passed the sub/supersolution checks."""

    def __init__(self, message: str, worst: Any = None):
        super().__init__(message)
        self.worst = worst
