"""Simulation and testing toolkit for rank-based portfolio competitions."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DegenerateInputError, EstimationError,  # noqa: E402
                     IngestionError, M6ArenaError, NumericError, ParameterError, ScoreError)
from .market import MarketModel, ReturnPanel, fit_covariance_cs, sample_returns  # noqa: E402
from .portfolio import BaselineTheta, SubmissionPanel  # noqa: E402
from .scoring import ScoreBoard, ir, rank  # noqa: E402

__all__ = [
    "__version__", "BaselineTheta", "ConfigurationError", "DegenerateInputError",
    "EstimationError", "IngestionError", "M6ArenaError", "MarketModel", "NumericError",
    "ParameterError", "ReturnPanel", "ScoreBoard", "ScoreError", "SubmissionPanel",
    "fit_covariance_cs", "ir", "rank", "sample_returns",
]
