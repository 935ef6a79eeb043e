"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AlasError(Exception):
    """Base class for every error raised by this package."""


class DataError(AlasError):
    """Bad input data: malformed files, broken invariants. CLI exit code 2."""


class EnvironmentProblem(AlasError):
    """Missing configuration or unreachable services. CLI exit code 3."""


class ParseError(DataError):
    """A file or text block could not be parsed.

    ``locator`` points at the offending place, e.g. ``"line 4"`` or
    ``"record 2"``.
    """

    def __init__(self, message: str, locator: str | None = None, path: str | None = None):
        self.message = message
        self.locator = locator
        self.path = path
        where = ", ".join(p for p in (path, locator) if p)
        super().__init__(f"{where}: {message}" if where else message)


class InvariantViolation(DataError):
    """Structurally valid data that breaks a domain invariant."""
