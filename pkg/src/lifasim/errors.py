"""Exception hierarchy shared across the simulator."""

from __future__ import annotations


class LifaError(Exception):
    """Base class for every error raised by lifasim."""


class ContractError(LifaError, ValueError):
    """A caller violated a documented precondition."""


class ConfigurationError(LifaError, ValueError):
    """Parameters that cannot describe a valid model."""


class IntegrationError(LifaError, FloatingPointError):
    """Non-finite value encountered while stepping the ODEs."""

    def __init__(self, what: str, index: tuple[int, ...] | int | None):
        self.what = what
        self.index = index
        super().__init__(f"non-finite {what} at index {index}")


class ConstructionError(LifaError, ValueError):
    pass


class ClusterError(LifaError, ValueError):
    pass


class ShapeError(LifaError, ValueError):
    def __init__(self, message: str, expected=None, actual=None):
        self.expected = expected
        self.actual = actual
        if expected is not None or actual is not None:
            message = f"{message} (expected {expected}, got {actual})"
        super().__init__(message)


class FaultPlanError(LifaError, ValueError):
    pass


class OracleError(LifaError, RuntimeError):
    """Wraps an accuracy-oracle failure with the trial that triggered it."""

    def __init__(self, trial: int, cause: BaseException):
        self.trial = trial
        self.cause = cause
        super().__init__(f"oracle failed on trial {trial}: {cause!r}")


class MetricError(LifaError, ValueError):
    pass


class RoutingError(LifaError, ValueError):
    pass


class ParseError(LifaError, ValueError):
    """Malformed network file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class StageError(LifaError, RuntimeError):
    """A pipeline stage failed; ``stage`` names it for the CLI exit report."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
