"""Exception types shared across the placescope package."""

from __future__ import annotations


class PlacescopeError(Exception):
    """Base class for all domain errors raised by this package."""


class ParseError(PlacescopeError):
    """A post record could not be parsed (strict mode only).

    Carries the 1-based line number and the offending field so pipeline
    debugging can point at the exact input line.
    """

    def __init__(self, line_number: int, field: str, message: str):
        self.line_number = line_number
        self.field = field
        super().__init__(f"line {line_number}, field '{field}': {message}")


class DegenerateInputError(PlacescopeError):
    """Input is too small or collapsed for the requested computation.

    Examples: fewer than two points for the default search radius, an
    all-zero raster fed to normalization, an empty corpus, a missing
    season in a seasonal-change request.
    """


class DegenerateGeometryError(PlacescopeError):
    """Point geometry cannot support the requested construction.

    Raised by hull builders for fewer than three points or an entirely
    collinear point set.
    """


class GridMismatchError(PlacescopeError):
    """Two rasters do not share the same grid geometry."""


class NoCooccurrence(PlacescopeError):
    """A term never co-occurs with the place name (n_xy = 0).

    This is a control-flow signal rather than a failure: PMI is
    undefined at zero co-occurrence, so table builders catch this and
    drop the term instead of emitting -inf.
    """


class PipelineError(PlacescopeError):
    """A pipeline stage failed; names the stage for diagnostics."""

    def __init__(self, stage: str, cause: Exception | str):
        self.stage = stage
        self.cause = cause if isinstance(cause, Exception) else None
        super().__init__(f"stage '{stage}': {cause}")
