"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class IliformerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IliformerError, ValueError):
    """Invalid configuration or hyperparameter record."""


class DimensionError(IliformerError, ValueError):
    """Tensor or array shapes are incompatible."""


class ParameterError(IliformerError, ValueError):
    """A scalar argument is outside its permitted range."""


class ContractError(IliformerError, RuntimeError):
    """A caller broke the documented calling contract."""


class NonFiniteError(IliformerError, FloatingPointError):
    """A forward operation produced NaN or Inf."""


class LengthError(IliformerError, ValueError):
    """A series is too short for the requested operation."""


class SchemaError(IliformerError, ValueError):
    """Input file or dataset does not follow the expected layout."""


class RowError(IliformerError, ValueError):
    """A single input row is malformed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(IliformerError, ValueError):
    """Input data violates an integrity rule (duplicates, gaps)."""


class DegenerateScalerError(IliformerError, ValueError):
    """Min-max scaler fitted on data with max == min."""


class CapabilityError(IliformerError, ValueError):
    """The model cannot perform the request it was asked for."""


class PoisonedGradientError(IliformerError, FloatingPointError):
    """An optimizer received a non-finite gradient."""

    def __init__(self, parameter: str):
        super().__init__(f"non-finite gradient for parameter {parameter!r}")
        self.parameter = parameter


class ConvergenceError(IliformerError, RuntimeError):
    """An iterative fit exhausted its budget; carries the best result found."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class DivergenceError(IliformerError, RuntimeError):
    """Training loss became non-finite; carries the last good parameter state."""

    def __init__(self, message: str, last_good=None, epoch: int | None = None):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch


class UndefinedCorrelationError(IliformerError, ValueError):
    """Pearson correlation requested for a constant input."""


class ReportError(IliformerError, ValueError):
    """An evaluation report cannot be produced."""


class DomainError(IliformerError, ValueError):
    """A function was evaluated outside its domain."""
