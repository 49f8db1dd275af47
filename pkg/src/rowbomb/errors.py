class ConfigError(ValueError):
    """Invalid geometry, timing, plan or experiment configuration."""


class CapacityError(ConfigError):
    """Request for more same-bank rows than the chip chunk holds."""


class ModelError(RuntimeError):
    """Internal inconsistency, e.g. a row index outside the bank."""


class ComparisonError(ValueError):
    """Two summaries that cannot be compared."""
