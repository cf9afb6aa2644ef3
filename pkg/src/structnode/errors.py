"""Exception types shared across the package."""


class StructnodeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(StructnodeError):
    """Invalid configuration: bad dimensions, unknown kinds, schema violations."""


class IntegrationError(StructnodeError):
    """The ODE solver produced a non-finite value."""


class TrainingError(StructnodeError):
    """Training failed (non-finite loss or gradient)."""


class FilterDivergenceError(StructnodeError):
    """The Kalman filter propagated a non-finite state."""


class PreconditionError(StructnodeError):
    """A runtime precondition failed (e.g., window longer than the data)."""
