"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid geometry, sensor, or cross-section configuration."""


class DegenerateProblemError(ValueError):
    """A computation has no meaningful answer (zero fission source,
    all-zero power map, zero reference norm)."""


class IterationLimitError(RuntimeError):
    """An iterative solve exhausted its iteration budget.

    Carries the last iterate so callers can inspect how far it got.
    """

    def __init__(self, message, last_solution=None):
        super().__init__(message)
        self.last_solution = last_solution


class SingularOperatorError(RuntimeError):
    """A reconstruction operator is numerically rank deficient."""
