"""Exception hierarchy. The CLI maps these onto stable exit codes."""

from __future__ import annotations


class CorpusForgeError(Exception):
    exit_code = 1


class ConfigError(CorpusForgeError, ValueError):
    """Invalid arguments or configuration (exit code 2)."""

    exit_code = 2


class DataError(CorpusForgeError, ValueError):
    """Input data violates a record or file contract (exit code 3)."""

    exit_code = 3


class RecordError(DataError):
    """A single malformed record, with its 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(DataError):
    """A file no longer matches the hash or line count recorded for it."""
