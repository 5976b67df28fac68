"""Optimal voluntary retirement with income disaster and income support, solved by duality."""

__version__ = "0.1.0"

from .errors import DomainError, NumericalError, ParameterError, SolverError, WrongRegime
from .model import SolvedModel, solve
from .params import ModelParams, Regime, validate

__all__ = [
    "DomainError",
    "ModelParams",
    "NumericalError",
    "ParameterError",
    "Regime",
    "SolvedModel",
    "SolverError",
    "WrongRegime",
    "__version__",
    "solve",
    "validate",
]
