"""Random bit generation from simulated optical-PUF speckle images."""

from .bits import BitString
from .errors import (
    InsufficientDataError,
    SimulationError,
    UndefinedCorrelationError,
)

__version__ = "0.1.0"

__all__ = [
    "BitString",
    "InsufficientDataError",
    "SimulationError",
    "UndefinedCorrelationError",
    "__version__",
]
