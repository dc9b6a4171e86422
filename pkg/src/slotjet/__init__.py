"""Two-phase free-boundary solver for oblique slot injection into a stream."""

from .errors import (BracketError, ConfigError, ConvergenceError, GeometryError,
                     GridError, SlotJetError)
from .geometry import BoundaryRole, DomainSpec

__version__ = "0.1.0"

__all__ = ["BoundaryRole", "DomainSpec", "SlotJetError", "GeometryError", "GridError",
           "ConvergenceError", "BracketError", "ConfigError"]
