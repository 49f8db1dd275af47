"""Discrete-event DDR4 bank/row-buffer simulator with Navigate and
Bank & Row-Conflict Bomb workloads."""

from rowbomb.errors import CapacityError, ComparisonError, ConfigError, ModelError
from rowbomb.geometry import DramGeometry, InterleaveMode

__all__ = [
    "CapacityError",
    "ComparisonError",
    "ConfigError",
    "DramGeometry",
    "InterleaveMode",
    "ModelError",
]

__version__ = "0.1.0"
