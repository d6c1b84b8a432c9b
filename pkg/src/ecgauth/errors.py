"""Exception hierarchy shared by every stage of the pipeline."""


class EcgError(Exception):
    """Base class for all package errors."""


class ValidationError(EcgError, ValueError):
    """An input violates a documented precondition or invariant."""


class RecordFormatError(ValidationError):
    """A record or artifact file is malformed.

    ``line`` is the 1-based line number of the offending line, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RecordDataError(RecordFormatError):
    """A sample line is non-numeric or non-finite."""


class NumericalError(EcgError, ArithmeticError):
    """A computation is numerically undefined (rank deficiency, zero denominator)."""


class EnrollmentError(ValidationError):
    """A subject cannot be enrolled from the supplied data."""


class CompatibilityError(ValidationError):
    """Dataset and reference database disagree on sampling rate or window."""


class UnknownSubjectError(EcgError, KeyError):
    """A claimed subject id is not enrolled in the reference database."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown subject"
