"""Exception classes raised across the package.

Each error carries a short machine-readable ``code`` (the class name) which
the command line surfaces on failure.
"""


class HandFitError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class NonPositiveBoneLength(HandFitError, ValueError):
    pass


class BehindCamera(HandFitError, ValueError):
    pass


class EmptyCrop(HandFitError, ValueError):
    pass


class EmptyImage(HandFitError, ValueError):
    pass


class MissingIntrinsics(HandFitError, ValueError):
    pass


class NoSignal(HandFitError, ValueError):
    pass


class EmptyCloud(HandFitError, ValueError):
    pass


class DegenerateClusters(HandFitError, ValueError):
    pass


class ParseError(HandFitError, ValueError):
    """A file could not be parsed; message carries line or field detail."""


class ValidationError(HandFitError, ValueError):
    """A parsed value violates a documented invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownSubcommand(HandFitError):
    pass


class UsageError(HandFitError):
    """A command-line flag is missing or malformed."""
