"""
Error hierarchy shared by every app of the pipeline.
"""


class GprError(Exception):
    """Base class for all pipeline errors."""


class PreconditionError(GprError, ValueError):
    """An operation was called with parameters outside its admissible range."""


class DegenerateInputError(GprError, ValueError):
    """Zero wavenumber, zero field value or another degenerate input."""


class DomainError(GprError, ValueError):
    """A depth outside the modelled medium."""


class ProfileFormatError(GprError, ValueError):
    """Malformed profile JSON or invalid layer values."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self):
        message = super().__str__()
        if self.line is not None:
            return f"{message} (line {self.line}, column {self.column})"
        return message


class TraceFormatError(GprError, ValueError):
    """Unreadable trace files or inconsistent spectrum normalization."""


class ResonanceError(GprError, ArithmeticError):
    """The surface Robin condition is degenerate: q(0) + ik0 vanishes."""


class NumericalOverflowError(GprError, ArithmeticError):
    """A non-finite intermediate value appeared."""


class PoleCrossingError(GprError, ArithmeticError):
    """A Moebius map hit its pole."""

    def __init__(self, message, omega=None, z=None):
        super().__init__(message)
        self.omega = omega
        self.z = z


class SamplingError(GprError):
    """The time grid aliases a significant part of the pulse spectrum."""


class NoSignalError(GprError):
    """The spectrum carries no energy above the low-frequency cutoff."""


class ContinuationUnstableError(GprError):
    """The damping weight underflows every sample of the trace."""


class EmptyTraceError(GprError):
    """A time shift left no samples in the trace."""


class NoArrivalError(GprError):
    """No impulse exceeds the detection threshold."""


class TerminalLayer(GprError):
    """Only one arrival is present: the current layer is the last one."""
