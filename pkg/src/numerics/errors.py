"""Exception hierarchy shared by the library and the CLI.

Every class carries the process exit code the CLI maps it to.
"""

from typing import Optional, Sequence


class LabError(Exception):
    """Base class for all lab errors."""

    exit_code = 5


class DomainError(LabError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 4


class ContractError(LabError, ValueError):
    """A control does not belong to the admissible test-function class."""

    exit_code = 4


class AssemblyError(LabError):
    """Quadrature of an element pair did not reach tolerance."""

    exit_code = 5

    def __init__(self, message: str, pair: Optional[tuple] = None, estimate: float = float("nan")):
        super().__init__(message)
        self.pair = pair
        self.estimate = estimate


class NumericalError(LabError):
    """A factorization or eigensolve failed; carries residual norms when known."""

    exit_code = 5

    def __init__(self, message: str, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.residuals = tuple(residuals)


class RegularizationRequiredError(NumericalError):
    """Least squares is rank deficient and no Tikhonov weight was given."""


class ScenarioParseError(LabError):
    """Scenario file could not be parsed."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class ScenarioValidationError(LabError):
    """Scenario parsed but violates an invariant."""

    exit_code = 3


class VerificationFailed(LabError):
    """At least one invariant check of the verify suite failed."""

    exit_code = 1
