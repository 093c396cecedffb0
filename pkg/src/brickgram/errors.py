"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class BrickgramError(Exception):
    """Base class for every error raised by this package."""


class ParseError(BrickgramError, ValueError):
    """Malformed input document. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    """A structured document (parameters, wall, rects) violates its schema."""


class EmptyInput(BrickgramError):
    pass


class DegenerateGeometry(BrickgramError):
    pass


class NoBricksFound(BrickgramError):
    pass


class DegenerateCluster(BrickgramError):
    pass


class InsufficientData(BrickgramError):
    pass


class SpecTooSmall(BrickgramError):
    pass


class GuardFailed(BrickgramError):
    """A grammar rule was applied to a state where its guard does not hold."""

    def __init__(self, rule, message: str = ""):
        self.rule = rule
        name = getattr(rule, "value", rule)
        super().__init__(f"guard failed for {name}" + (f": {message}" if message else ""))


class ReplayMismatch(BrickgramError):
    """A recorded derivation disagrees with the rule the scheduler would pick."""
