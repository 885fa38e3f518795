"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: input/format problems exit 2, data
validity problems exit 3, numeric failures exit 4.
"""

from __future__ import annotations


class ConcTrackError(Exception):
    """Base class for all pipeline errors."""


class InputFormatError(ConcTrackError):
    """A file or record is malformed (bad syntax, wrong keys, bad values)."""

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix = f"{source}:" if line is None else f"{source}:{line}:"
        elif line is not None:
            prefix = f"line {line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)


class ConfigError(InputFormatError):
    """A configuration file or section is invalid."""


class DataError(ConcTrackError):
    """Well-formed input that is semantically unusable for the requested step."""


class NumericError(ConcTrackError):
    """A computation produced or received non-finite values."""
