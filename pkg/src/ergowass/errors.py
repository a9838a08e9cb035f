"""Exception types shared across the package."""


class ErgowassError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ErgowassError, ValueError):
    """An argument is outside the documented domain of an operation."""


class DivergenceError(ErgowassError, RuntimeError):
    """A simulated trajectory crossed the explosion threshold.

    Attributes
    ----------
    step : int
        Index of the first step whose state exceeded the threshold.
    seed : int or None
        Seed of the offending replication, when known.
    """

    def __init__(self, message, step, seed=None):
        super().__init__(message)
        self.step = step
        self.seed = seed


class CirculantEmbeddingError(ErgowassError, RuntimeError):
    """The circulant embedding of a covariance produced negative eigenvalues."""

    def __init__(self, message, min_eigenvalue, n_negative):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.n_negative = n_negative


class OutOfDomain(ErgowassError, ValueError):
    """A lemma or asymptotic formula is evaluated outside its hypotheses."""


class ConfigError(ErgowassError, ValueError):
    """An experiment configuration is malformed or inconsistent."""
