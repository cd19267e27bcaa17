"""
Exception hierarchy for the hftnet pipeline.

Each top-level error class carries the process exit code the CLI maps it to.
"""

from typing import Optional


class HftnetError(Exception):
    """Base class for all pipeline errors."""
    exit_code = 1


class ConfigError(HftnetError):
    """Invalid or inconsistent configuration."""
    exit_code = 2


class DataError(HftnetError):
    """Input data cannot support the requested computation."""
    exit_code = 3


class IngestionError(DataError):
    """A trade record could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path:
            location += f"{path}:"
        if line is not None:
            location += f"line {line}: "
        elif location:
            location += " "
        super().__init__(f"{location}{message}")


class GridError(DataError):
    """A trade falls outside the session grid."""


class InsufficientDataError(DataError):
    """Too few bars or rows for the requested window, lookback or model."""


class SplitError(DataError):
    """A train/test fold came out empty."""

    def __init__(self, message: str, fold: Optional[int] = None):
        self.fold = fold
        super().__init__(message)


class DegenerateError(HftnetError):
    """A statistical computation has no meaningful answer (single class, zero accuracy, ...)."""
    exit_code = 4
