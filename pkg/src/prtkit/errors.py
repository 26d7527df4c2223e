"""Exception types shared across the toolkit.

The CLI maps these to exit code 2 (data errors), as opposed to usage
errors (exit 1).
"""


class PrtError(Exception):
    """Base class for all toolkit data errors."""


class FormatError(PrtError):
    """Corrupt or unsupported file content."""


class DimensionError(PrtError):
    """Maps or buffers that should agree in shape do not."""


class MeshError(PrtError):
    """Unusable mesh input (empty, unreadable, degenerate)."""
