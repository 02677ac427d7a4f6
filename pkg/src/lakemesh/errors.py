"""Exception hierarchy.

Every error carries a short machine-readable ``error_class`` slug and the CLI
exit code it maps to (2 input/parse, 3 precondition, 4 solver, 5 internal).
"""

from __future__ import annotations


class LakeMeshError(Exception):
    error_class = "internal"
    exit_code = 5


class InputError(LakeMeshError, ValueError):
    error_class = "input"
    exit_code = 2


class ParseError(InputError):
    """A malformed file. ``position`` is a line number or byte offset."""

    error_class = "parse"

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (byte {offset})"
        super().__init__(message + where)


class FormatError(ParseError):
    error_class = "format"


class HeaderError(ParseError):
    error_class = "bad-header"


class IndexRangeError(ParseError):
    error_class = "index-range"


class TruncatedError(ParseError):
    error_class = "truncated"


class EmptyLogError(InputError):
    error_class = "empty-log"


class DomainError(InputError):
    """Argument outside the domain of a function (e.g. longitude > 180)."""

    error_class = "domain"


class OutOfBandError(DomainError):
    error_class = "out-of-band"


class ParameterError(InputError):
    error_class = "parameter"


class ResolutionError(ParameterError):
    error_class = "resolution"


class PreconditionError(LakeMeshError, ValueError):
    error_class = "precondition"
    exit_code = 3


class FrameError(PreconditionError):
    error_class = "frame-mismatch"


class DegenerateGeometryError(PreconditionError):
    error_class = "degenerate-geometry"


class CoverageError(PreconditionError):
    error_class = "coverage"


class NotWatertightError(PreconditionError):
    error_class = "not-watertight"

    def __init__(self, message: str, boundary_edges: int = 0):
        self.boundary_edges = boundary_edges
        super().__init__(f"{message} (boundary_edges={boundary_edges})")


class SolverError(LakeMeshError, RuntimeError):
    error_class = "solver"
    exit_code = 4

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
