"""Exception types shared across the package.

Invalid arguments raise plain :class:`ValueError`.
"""


class InsufficientDataError(ValueError):
    """Input is too short for the requested statistic."""

    def __init__(self, message, minimum=None):
        super().__init__(message)
        self.minimum = minimum


class UndefinedCorrelationError(ValueError):
    """Correlation requested for a sequence with zero variance."""


class SimulationError(RuntimeError):
    """Numerical failure inside the speckle simulator (non-finite field)."""
