"""Exception hierarchy for slowmap."""


class SlowmapError(Exception):
    """Base class for all errors raised by slowmap."""


class ConfigurationError(SlowmapError, ValueError):
    """Invalid parameters or configuration."""


class IntegrationError(SlowmapError, FloatingPointError):
    """The SDE integrator produced a non-finite value."""


class MapDomainError(SlowmapError, ValueError):
    """An observation map returned non-finite output."""


class UnsupportedOperationError(SlowmapError, NotImplementedError):
    """The requested operation is not available for this object."""


class InsufficientSamplesError(SlowmapError, ValueError):
    pass


class DegenerateCovarianceError(SlowmapError, ValueError):
    pass


class StateError(SlowmapError, RuntimeError):
    """An object is missing data that an operation requires."""


class ConnectivityError(SlowmapError, ValueError):
    """The kernel graph has an isolated point."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"point {index} has zero kernel row sum (isolated)")


class UndefinedCorrelationError(SlowmapError, ValueError):
    pass


class NoKneeError(SlowmapError, ValueError):
    pass


class InsufficientRangeError(SlowmapError, ValueError):
    pass


class MetricInvalidError(SlowmapError, ValueError):
    pass
