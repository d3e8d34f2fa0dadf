"""Exception types shared across the package."""
from __future__ import annotations


class ConformalObjectsError(Exception):
    """Base class for errors raised by this package."""


class SpaceError(ConformalObjectsError):
    """Mismatched or unsupported space operation."""


class InvalidPointError(SpaceError, ValueError):
    """A point violates its space's invariants."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConvergenceError(ConformalObjectsError):
    """An iterative solver hit its iteration cap."""


class NoLocalDataError(ConformalObjectsError):
    """No covariate falls inside the kernel window around the target."""

    def __init__(self, message: str, x: float | None = None, index: int | None = None):
        super().__init__(message)
        self.x = x
        self.index = index


class DatasetError(ConformalObjectsError, ValueError):
    """A dataset file could not be parsed or failed validation."""

    def __init__(self, message: str, row: int | None = None, column: int | str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)
        self.row = row
        self.column = column
