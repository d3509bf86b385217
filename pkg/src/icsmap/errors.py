"""Exception hierarchy shared by every stage."""

from __future__ import annotations


class IcsmapError(Exception):
    """Base class for all errors raised by icsmap."""


class ParseError(IcsmapError, ValueError):
    """A data file could not be parsed.

    ``source`` and ``line`` locate the offending input when known.
    """

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class ValidationError(IcsmapError, ValueError):
    """Input parsed but violates a data invariant (duplicates, ranges...)."""


class NotFoundError(IcsmapError, KeyError):
    """A named entity does not exist."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class FetchError(IcsmapError):
    """The scan-data source kept failing after all retries."""


class AuthError(FetchError):
    """The scan-data source rejected the API key."""
