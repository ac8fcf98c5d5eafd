"""Exception types raised across the package."""


class NMSteerError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(NMSteerError, ValueError):
    pass


class ShapeError(NMSteerError, ValueError):
    pass


class InvalidTransformError(NMSteerError, ValueError):
    pass


class InvalidParameterError(NMSteerError, ValueError):
    pass


class InvalidStateError(NMSteerError, ValueError):
    pass


class UnsupportedError(NMSteerError, ValueError):
    pass


class ConfigurationError(NMSteerError, ValueError):
    pass


class DegenerateVarianceError(NMSteerError, ArithmeticError):
    pass


class ConstructionFailedError(NMSteerError):
    """Effect positivity failed after an (N,M)-POVM was assembled.

    ``min_eigenvalue`` is the most negative effect eigenvalue found; the
    assembled (unvalidated) POVM is kept on ``candidate`` for inspection.
    """

    def __init__(self, message, min_eigenvalue=None, candidate=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.candidate = candidate


class ChainRepairError(NMSteerError, ArithmeticError):
    """The chain state became numerically singular."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
