"""Exception types shared across the package."""


class MibciError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MibciError, ValueError):
    """Invalid experiment configuration, CLI arguments, or config file."""


class DataError(MibciError, ValueError):
    """Malformed container file or trial data that violates its contract."""


class NumericError(MibciError, RuntimeError):
    """Numerical failure: non-convergence, degeneracy, loss of definiteness."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
