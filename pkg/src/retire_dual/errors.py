"""Exception hierarchy shared by the solver, simulator and CLI."""

from __future__ import annotations


class SolverError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(SolverError, ValueError):
    """A model parameter violates a constraint.

    ``code`` is a stable machine-readable name of the violated constraint
    (e.g. ``"MuNotAboveR"``) and ``field`` names the offending input.
    """

    def __init__(self, code: str, field: str, message: str):
        super().__init__(f"{code}: {message} (field '{field}')")
        self.code = code
        self.field = field


class NumericalError(SolverError, ArithmeticError):
    """A numerical procedure failed (bracketing, convergence, degeneracy)."""

    code = "NumericalError"


class NoSignChange(NumericalError):
    code = "NoSignChange"


class MaxIterExceeded(NumericalError):
    code = "MaxIterExceeded"


class BracketingFailed(NumericalError):
    code = "BracketingFailed"


class DegenerateDenominator(NumericalError):
    code = "DegenerateDenominator"


class DomainError(SolverError, ValueError):
    """An evaluation point lies outside the domain of the map."""

    code = "DomainError"


class NonPositiveZ(DomainError):
    code = "NonPositiveZ"


class OutOfRegion(DomainError):
    code = "OutOfRegion"


class WealthOutOfRange(DomainError):
    code = "WealthOutOfRange"


class WrongRegime(SolverError):
    code = "WrongRegime"


class InsolventAtDisaster(DomainError):
    code = "InsolventAtDisaster"
