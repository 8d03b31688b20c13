"""Exception types shared across the package."""


class RhpgKfError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(RhpgKfError, ValueError):
    """A matrix or vector has a shape inconsistent with the system."""


class PreconditionError(RhpgKfError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class NumericsError(RhpgKfError, RuntimeError):
    """A numerical routine failed (singular system, eigensolver breakdown)."""


class ConvergenceError(RhpgKfError, RuntimeError):
    """An iterative solver exhausted its budget before reaching tolerance."""

    def __init__(self, message: str, last_error: float | None = None):
        super().__init__(message)
        self.last_error = last_error


class DivergenceError(RhpgKfError, RuntimeError):
    """Iterates blew past the divergence guard."""

    def __init__(self, message: str, norm: float | None = None, stage: int | None = None):
        super().__init__(message)
        self.norm = norm
        self.stage = stage


class ConfigError(RhpgKfError, ValueError):
    """An experiment configuration failed to parse or validate."""
