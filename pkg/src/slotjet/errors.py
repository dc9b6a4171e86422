"""Exception types. Every error carries a short machine-readable ``code``."""

from __future__ import annotations


class SlotJetError(Exception):
    """Base class; ``code`` is an upper-case token such as ``SLOT_DEGENERATE``."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class GeometryError(SlotJetError):
    pass


class GridError(SlotJetError):
    pass


class ConvergenceError(SlotJetError):
    """Raised when an iteration hits its cap; ``partial`` holds the last state."""

    def __init__(self, code: str, message: str = "", partial=None):
        super().__init__(code, message)
        self.partial = partial


class BracketError(SlotJetError):
    pass


class ConfigError(SlotJetError):
    pass
