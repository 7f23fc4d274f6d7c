"""Exception types shared across the package."""
from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class AssumptionError(ValueError):
    """A model violates one of the standing structural assumptions.

    Carries the failed check on ``check`` when raised by ``validate_model``.
    """

    def __init__(self, message, check=None):
        super().__init__(message)
        self.check = check


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class ConfigError(ValueError):
    """A run configuration document is malformed or inconsistent."""


class SolverError(RuntimeError):
    """The nonlinear solver hit an unrecoverable state (singular Jacobian,
    non-finite step, overflow guard tripped at a converged iterate).

    ``history`` holds (iteration, residual_norm) pairs up to the failure.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = tuple(history or ())


class ContinuationError(SolverError):
    """A continuation sweep aborted; ``trace`` holds the completed rows."""

    def __init__(self, message, trace=None, history=None):
        super().__init__(message, history=history)
        self.trace = tuple(trace or ())
