"""Exception hierarchy shared by all modules."""


class M6ArenaError(Exception):
    """Base class for package errors."""


class ParameterError(M6ArenaError, ValueError):
    """Invalid model or strategy parameters."""


class EstimationError(M6ArenaError, ValueError):
    """An estimator is undefined for the given input."""


class ScoreError(M6ArenaError, ArithmeticError):
    """A score (IR, Sharpe ratio, log return) is undefined."""


class NumericError(M6ArenaError, ArithmeticError):
    """A linear-algebra step failed (singular or ill-posed system)."""


class DegenerateInputError(M6ArenaError, ValueError):
    """Input is well-formed but carries no usable information."""


class ConfigurationError(M6ArenaError, ValueError):
    """Inconsistent run or solver configuration."""


class IngestionError(M6ArenaError, ValueError):
    """A data file could not be parsed or failed validation."""
