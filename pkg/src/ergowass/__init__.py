"""Occupation-measure Wasserstein convergence laboratory for ergodic SDEs."""

from .errors import (
    CirculantEmbeddingError,
    ConfigError,
    DivergenceError,
    ErgowassError,
    InvalidArgument,
    OutOfDomain,
)

__version__ = "0.1.0"

__all__ = [
    "CirculantEmbeddingError",
    "ConfigError",
    "DivergenceError",
    "ErgowassError",
    "InvalidArgument",
    "OutOfDomain",
    "__version__",
]
