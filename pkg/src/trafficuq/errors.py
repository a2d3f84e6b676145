"""Exception hierarchy shared by every module."""


class TrafficUQError(Exception):
    """Base class for all package errors."""


class ConfigError(TrafficUQError, ValueError):
    pass


class SchemaError(TrafficUQError, ValueError):
    pass


class DataError(TrafficUQError, ValueError):
    pass


class SplitError(TrafficUQError, ValueError):
    pass


class FitError(TrafficUQError, ValueError):
    pass


class ShapeError(TrafficUQError, ValueError):
    pass


class TrainingError(TrafficUQError, RuntimeError):
    """Raised when a network diverges; ``epoch`` holds the offending epoch."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class CalibrationError(TrafficUQError, ValueError):
    pass


class InsufficientCalibrationError(CalibrationError):
    """Calibration set too small for the requested significance level."""


class ModelError(TrafficUQError, ValueError):
    pass


class MetricError(TrafficUQError, ValueError):
    pass


class LeakageError(TrafficUQError, RuntimeError):
    pass


class DegenerateSamplingError(ModelError):
    """MC-dropout sampling requested from a network without dropout."""
