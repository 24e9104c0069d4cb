"""Exception hierarchy shared by every pcie subsystem.

The CLI maps each family onto its own exit code, so library code should
raise the most specific class that applies.
"""


class PcieError(Exception):
    """Base class for all pcie errors."""


class ConfigError(PcieError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(PcieError, ValueError):
    """Malformed input data, split or dataset directory."""


class NumericalError(PcieError, ArithmeticError):
    """NaN/Inf encountered in a loss or gradient."""


class ShapeError(PcieError, ValueError):
    """Operand shapes are incompatible."""


class GraphError(PcieError, RuntimeError):
    """Misuse of the differentiation graph (e.g. double backward)."""


class CheckpointError(PcieError, ValueError):
    """Unreadable, truncated or version-mismatched checkpoint."""
