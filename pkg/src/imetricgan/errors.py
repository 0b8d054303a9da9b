"""Exception hierarchy shared by every subsystem."""


class IMetricGANError(Exception):
    """Base class for all package errors."""


class SignalError(IMetricGANError, ValueError):
    pass


class MetricError(IMetricGANError, ValueError):
    pass


class ShapeError(IMetricGANError, ValueError):
    pass


class DivergenceError(IMetricGANError, FloatingPointError):
    """Raised when a loss, gradient or parameter becomes non-finite."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class DataError(IMetricGANError):
    """Malformed or missing audio, manifest or checkpoint data."""


class ConfigError(IMetricGANError, ValueError):
    pass
