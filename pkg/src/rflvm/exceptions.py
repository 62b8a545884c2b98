"""Exception classes shared across the package.

The CLI maps these onto exit-code classes: configuration/shape/data problems
are user-fixable inputs, numeric/covariance failures are runtime breakdowns.
"""


class RflvmError(Exception):
    """Base class for all package errors."""


class ConfigError(RflvmError):
    """Invalid configuration value or combination."""


class ShapeError(RflvmError):
    """Array arguments with incompatible or malformed shapes."""


class DataError(RflvmError):
    """Malformed or out-of-domain observed data."""


class CovarianceError(RflvmError):
    """A covariance/scale matrix is not symmetric positive definite."""


class NumericError(RflvmError):
    """Non-finite values or a numerically failed update."""
