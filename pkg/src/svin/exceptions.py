"""Exception hierarchy shared across the package."""


class SVINError(Exception):
    """Base class for all package errors."""


class ShapeError(SVINError, ValueError):
    """Grids that must agree in shape do not."""


class ValidationError(SVINError, ValueError):
    """An argument is outside its allowed domain."""


class DomainError(ValidationError):
    """An operation was called at a point where it is undefined."""


class TrainingError(SVINError, RuntimeError):
    """Optimisation produced a non-finite loss."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FormatError(SVINError, ValueError):
    """Base class for .svv parse failures."""


class MagicError(FormatError):
    pass


class HeaderError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class PayloadSizeError(FormatError):
    pass
