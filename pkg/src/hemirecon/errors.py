"""Exception types shared across the package."""

from __future__ import annotations


class HemireconError(Exception):
    """Base class for all package errors."""


class NoOverlap(HemireconError):
    """Two series have no common years."""


class DegenerateBaseline(HemireconError):
    """Anomaly base window holds fewer than two usable values."""


class NoCompleteBlock(HemireconError):
    """Series does not span a single complete decade block."""


class MissingDataError(HemireconError):
    """Operation requires a gap-free series but missing values are present."""


class FormatError(HemireconError):
    """Malformed input file.

    Carries the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(HemireconError):
    """Two records share an id."""


class DegenerateColumn(HemireconError):
    """A predictor column has zero variance over the fit window."""

    def __init__(self, column_id: str):
        self.column_id = column_id
        super().__init__(f"zero-variance column: {column_id}")


class InsufficientCalibration(HemireconError):
    """Calibration overlap too short for the requested fit."""


class SingularFit(HemireconError):
    """Normal equations are singular."""


class ConvergenceError(HemireconError):
    """Iterative solver hit its iteration cap.

    ``last_change`` is the final convergence measure, when available.
    """

    def __init__(self, message: str, last_change: float | None = None):
        self.last_change = last_change
        if last_change is not None:
            message = f"{message} (last change {last_change:.3e})"
        super().__init__(message)


class SpecError(HemireconError):
    """Pseudoproxy specification inconsistent with the truth field."""


class BlockMismatch(HemireconError):
    """Requested decade is not a complete block of the series."""


class DegenerateTruth(HemireconError):
    """Verification truth has zero variance over the scoring window."""
