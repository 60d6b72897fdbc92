"""Exception hierarchy shared by every module of the package."""


class StochPoissonError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StochPoissonError, ValueError):
    """Inconsistent dimensions, malformed inputs or invalid configuration.

    ``field`` names the offending input or config field when known.
    """

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class FieldEvaluationError(StochPoissonError, ArithmeticError):
    """A field returned NaN/Inf or an array of the wrong shape."""


class DifferentiationError(FieldEvaluationError):
    """Finite differencing hit a non-finite evaluation.

    ``index`` is the coordinate along which the probe failed.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StructureError(StochPoissonError, ValueError):
    """A bracket matrix or structure tensor violates antisymmetry."""


class BlowUpError(StochPoissonError, ArithmeticError):
    """Integration produced a non-finite state; ``step`` is the failing step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
