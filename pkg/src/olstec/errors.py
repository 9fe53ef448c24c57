"""Exception hierarchy shared across the package."""


class OlstecError(Exception):
    """Base class for all package errors."""


class StructuralError(OlstecError, ValueError):
    """Shapes, lengths or parameters that do not fit together."""


class NumericalError(OlstecError, ArithmeticError):
    """Base class for failures of the numerical routines."""


class SingularSystemError(NumericalError):
    """The weight system for a slice has no unique solution."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"singular weight system at slice {t}")


class ConditioningError(NumericalError):
    """A per-row or per-column normal matrix failed its SPD factorization."""

    def __init__(self, axis, index, t):
        self.axis = axis
        self.index = index
        self.t = t
        super().__init__(f"{axis} {index} lost positive definiteness at slice {t}")


class DivergenceError(NumericalError):
    """Factor norms blew up during a gradient update."""


class UndefinedMetricError(NumericalError):
    """A metric was requested for a reference with zero norm."""


class StreamFormatError(OlstecError):
    """Malformed stream file (bad magic, version or header)."""


class TruncatedStreamError(OlstecError, OSError):
    """A slice record ended early."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"stream truncated inside slice record {t}")
