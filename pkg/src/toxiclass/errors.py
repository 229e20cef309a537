"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class ToxiclassError(Exception):
    """Base class for all package errors."""


class ConfigError(ToxiclassError):
    """Invalid or inconsistent configuration (bad values, missing files)."""


class DataError(ToxiclassError):
    """Problems with input data: ingestion, validation, file formats."""


class IngestError(DataError):
    """Malformed or invariant-violating dataset rows."""

    def __init__(self, message: str, rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows else []


class CheckpointError(DataError):
    """Corrupt, truncated, or mismatching model checkpoint."""


class NumericError(ToxiclassError):
    """Non-finite values or other numeric failures."""
