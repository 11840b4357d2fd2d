"""Error categories used across the simulator."""


class DcpflError(Exception):
    """Base class for all simulator errors."""


class InputError(DcpflError, ValueError):
    """Caller supplied invalid data (empty dataset, bad probability vector, ...)."""


class ConfigError(DcpflError, ValueError):
    """Inconsistent configuration: shape mismatches, bad hyperparameters."""


class StateError(DcpflError, RuntimeError):
    """Operation invoked in the wrong phase or with insufficient history."""


class NumericalError(DcpflError, ArithmeticError):
    """Non-finite value encountered during computation."""
