from typing import Any


class PlanningError(ValueError):
    """Root of every error raised by voipomdp."""

    exit_code = 1


class ModelValidationError(PlanningError):
    """A model, belief or file violates its invariants."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpecInvariantViolation(ModelValidationError):
    """A deck model spec breaks the bidiagonal/stochastic structure."""


class ZeroLikelihoodObservation(PlanningError):
    """The observation cannot occur for this belief and action."""


class EmptyAlphaSet(PlanningError):
    """A value function was requested from an empty vector set."""


class OracleTooLarge(PlanningError):
    """Exhaustive vector enumeration exceeded its size guard."""


class TrivialActionSelected(PlanningError):
    """A permanent channel was requested for the trivial observation action."""


class IncompatibleSettings(PlanningError):
    """Two control settings differ in elements they must share."""

    exit_code = 4


class BudgetExhausted(PlanningError):
    """
    A solver ran out of iterations or wall-clock time.

    The best bounds found so far travel with the exception.
    """

    exit_code = 3

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        self.result = result
