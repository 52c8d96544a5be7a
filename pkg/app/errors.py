"""
Exception hierarchy for the GuideTouch toolkit.
Library code raises these; the CLI maps them to exit codes.
"""

from typing import Optional


class GuideTouchError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(GuideTouchError):
    """Invalid or unreadable configuration."""


class SceneFormatError(GuideTouchError):
    """Scene or trajectory file could not be parsed or validated."""

    def __init__(self, message: str, path: Optional[str] = None, lineno: Optional[int] = None):
        self.path = path
        self.lineno = lineno
        where = path or "<scene>"
        if lineno is not None:
            where = f"{where}, line {lineno}"
        super().__init__(f"{where}: {message}")


class DomainError(GuideTouchError, ValueError):
    """Numeric argument outside the domain of a formula."""


class GeometryMismatchError(GuideTouchError):
    """Sensor rows cannot be aligned onto the combined elevation grid."""


class TickMismatchError(GuideTouchError):
    """Frames from different ticks were combined."""


class DimensionMismatchError(GuideTouchError):
    """Grid shape differs from the state it is applied to."""


class PatternError(GuideTouchError, ValueError):
    """Unknown, duplicate or empty motor label, or naming an empty mask."""


class ResponderError(GuideTouchError):
    """Simulated responder does not cover the schedule's patterns."""


class TableFormatError(GuideTouchError):
    """Confusion-table or trial-log input is malformed."""


class DegenerateStatisticsError(GuideTouchError):
    """A test statistic is undefined for the given data."""


class InfiniteFError(DegenerateStatisticsError):
    """Within-group variance is zero while between-group variance is not."""

    def __init__(self, message: str = "degenerate: infinite F"):
        super().__init__(message)


class NoVarianceError(DegenerateStatisticsError):
    """All observations are equal; F is 0/0."""

    def __init__(self, message: str = "no variance"):
        super().__init__(message)
