"""Exception hierarchy.

The CLI maps each family onto an exit code, so every error raised by the
library belongs to exactly one of the three families below.
"""

from __future__ import annotations


class MaxStopError(Exception):
    """Base class for all library errors."""

    code = "ERROR"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": str(self)}
        if self.details:
            out["details"] = self.details
        return out


# --- configuration (exit 2) -------------------------------------------------


class ConfigError(MaxStopError):
    code = "CONFIG_ERROR"


# --- bad inputs (exit 3) -----------------------------------------------------


class DomainError(MaxStopError, ValueError):
    """Argument outside the domain of an operation."""

    code = "DOMAIN_ERROR"


class ArgumentError(DomainError):
    code = "ARGUMENT_ERROR"


class RangeError(DomainError):
    code = "RANGE_ERROR"


class UnsupportedError(DomainError):
    """Input has a form the construction cannot handle."""

    code = "UNSUPPORTED"


class InconsistentMeasureError(DomainError):
    code = "INCONSISTENT_MEASURE"


# --- numerical failures (exit 4) --------------------------------------------


class NumericalError(MaxStopError, ArithmeticError):
    code = "NUMERIC_FAILURE"


class InfinitePayoffError(NumericalError):
    """No maximal solution stays below the diagonal: the value is +inf."""

    code = "INFINITE_PAYOFF"


class DivergenceError(NumericalError):
    code = "DIVERGENCE"


class SingularityError(NumericalError):
    code = "SINGULARITY"


class NoInteriorMaxError(NumericalError):
    code = "NO_INTERIOR_MAX"


class ConvergenceError(NumericalError):
    code = "NO_CONVERGENCE"


class SimulationError(NumericalError):
    code = "SIMULATION_ERROR"


class ReliabilityError(NumericalError):
    code = "RELIABILITY_ERROR"
