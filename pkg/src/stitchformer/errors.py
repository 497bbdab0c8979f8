"""Exception types shared across the package."""


class StitchformerError(Exception):
    """Base class for all package errors."""


class ContractError(StitchformerError, ValueError):
    """A caller violated an operation's precondition (shape, length, range)."""


class NumericError(StitchformerError, ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


class CorruptionError(StitchformerError):
    """A file failed its integrity check (hash, length, truncated payload)."""


class FormatError(StitchformerError):
    """A file has an unknown magic string or unsupported format version."""


class GenerationError(StitchformerError):
    """A dataset could not be generated under the requested plan."""


class UsageError(StitchformerError):
    """Invalid command-line or config-file input."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
