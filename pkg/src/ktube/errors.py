"""Exception hierarchy shared by every ktube module."""


class KtubeError(Exception):
    """Base class for all errors raised by ktube."""


class InvalidParams(KtubeError, ValueError):
    """A tube specification violates a family constraint."""


class NotOnBoundary(KtubeError, ValueError):
    """A point passed as a boundary point is not within tolerance of the boundary."""


class NotInterior(KtubeError, ValueError):
    """A ray origin is outside the closed tube, or points out of it."""


class MaxLengthExceeded(KtubeError):
    """A ray flew farther than the tube-dependent maximum flight length."""


class StuckPoint(KtubeError):
    """Every retry of a walk step failed; indicates a geometry defect."""

    def __init__(self, message, trajectory=None, step=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.step = step


class OutOfRange(KtubeError, ValueError):
    """A time or index lies outside the recorded trajectory."""


class InsufficientData(KtubeError, ValueError):
    """Too few samples for the requested statistic."""


class GeometryError(KtubeError, ValueError):
    """A geometric precondition (such as nesting) does not hold."""


class ConfigError(KtubeError, ValueError):
    """A run configuration is invalid; ``field`` names the offending key."""

    def __init__(self, field, message=None):
        super().__init__(message or field)
        self.field = field
