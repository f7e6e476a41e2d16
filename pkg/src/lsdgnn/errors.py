"""Exception hierarchy.

Everything derived from ``ValueError`` or ``IndexError`` is a validation
problem with the inputs (CLI exit code 1); the rest are runtime failures
(exit code 2).
"""


class LsdError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LsdError, ValueError):
    pass


class DomainError(LsdError, ValueError):
    pass


class ConfigError(LsdError, ValueError):
    pass


class DataError(LsdError, ValueError):
    pass


class FormatError(LsdError, ValueError):
    """Unparseable input. ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class IncompatibleCheckpointError(FormatError):
    pass


class LabelIndexError(LsdError, IndexError):
    pass


class ContractError(LsdError, RuntimeError):
    """A caller broke a precondition that is not about input data."""


class CheckError(LsdError, RuntimeError):
    """Gradient checking could not be carried out."""


class TrainingDiverged(LsdError, RuntimeError):
    pass
