"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 2 (argparse),
``DataError`` subclasses exit 3, ``NumericalError`` subclasses exit 4.
"""


class RoadPolyError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RoadPolyError, ValueError):
    """An argument violates a documented precondition."""


class DataError(RoadPolyError):
    """Input data is malformed, inconsistent or insufficient."""


class ParseError(DataError):
    """A text document could not be parsed."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class RouteMismatchError(DataError):
    """A trace never enters the first node of its declared route."""


class TraceCorruptError(DataError):
    """Consecutive trace samples are impossibly far apart."""


class InsufficientDataError(DataError):
    """A segment bucket holds too few samples for a trustworthy fit."""


class NoRouteError(DataError):
    """Destination unreachable from the source node."""


class CoverageImpossibleError(DataError):
    """Topology is not strongly connected, so coverage cannot terminate."""

    def __init__(self, unreachable: list[tuple[str, str]]):
        pairs = ", ".join(f"{a}->{b}" for a, b in unreachable[:8])
        more = "" if len(unreachable) <= 8 else f" (+{len(unreachable) - 8} more)"
        super().__init__(f"unreachable node pairs: {pairs}{more}")
        self.unreachable = unreachable


class WindowTooSparseError(DataError):
    """A fitting window does not contain enough samples."""


class HeadingUndefinedError(DataError):
    """Speed is too low for a meaningful heading."""


class UndefinedMetricsError(DataError):
    """Metrics requested over an empty sample set."""


class NumericalError(RoadPolyError):
    """A numerical procedure failed."""


class UnderdeterminedError(NumericalError):
    """Fewer samples than unknown coefficients."""


class IllConditionedError(NumericalError):
    """The least-squares system is numerically singular."""
