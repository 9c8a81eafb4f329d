"""Exception types shared across the package."""


class UbotError(Exception):
    """Base class for package errors."""


class ShapeError(UbotError):
    """Incompatible matrix/field dimensions."""


class InvalidMatrix(UbotError):
    """Non-finite or otherwise invalid matrix input."""


class NotPsd(UbotError):
    """Matrix has a negative eigenvalue beyond the PSD tolerance."""


class Unsupported(UbotError):
    """Requested configuration is outside the supported range."""


class NumericalError(UbotError):
    """Quadrature or iteration failure."""


class ProjectionError(NumericalError):
    """Paraboloid projection failed to converge; carries the residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InvalidMass(UbotError):
    """Negative mass passed where a nonnegative one is required."""


class InvalidEpsilon(UbotError):
    """Regularization parameter outside its admissible range."""


class ConfigError(UbotError):
    """Experiment configuration violates the schema; names the field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
