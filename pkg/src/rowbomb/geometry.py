"""Static DIMM description and capacity arithmetic.

The defaults describe an 8GB DDR4-2666 ECC RDIMM (1Rx8): eight x8 chips,
4 bank groups of 4 banks, 2^16 rows of 2^10 one-byte columns. ECC storage
is ignored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Any, Mapping

from rowbomb.errors import ConfigError

_MAX_BITS = 2**63 - 1


class InterleaveMode(enum.Enum):
    HIGH_ORDER = "high"
    LOW_ORDER = "low"

    @classmethod
    def parse(cls, value: str | InterleaveMode) -> InterleaveMode:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"high": cls.HIGH_ORDER, "highorder": cls.HIGH_ORDER,
                   "low": cls.LOW_ORDER, "loworder": cls.LOW_ORDER}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"interleave_mode: unknown mode {value!r} (use high or low)") from None


@dataclass(frozen=True)
class DramGeometry:
    chips: int = 8
    bank_groups: int = 4
    banks_per_group: int = 4
    rows_per_bank: int = 2**16
    columns_per_row: int = 2**10
    column_width_bits: int = 8
    row_slice_bytes: int = 1024
    chip_chunk_bytes: int = 131072
    interleave_mode: InterleaveMode = InterleaveMode.HIGH_ORDER

    def __post_init__(self) -> None:
        for f in fields(self):
            if f.name == "interleave_mode":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{f.name}: expected an integer, got {value!r}")
            if value <= 0:
                raise ConfigError(f"{f.name}: must be positive, got {value}")
        object.__setattr__(self, "interleave_mode", InterleaveMode.parse(self.interleave_mode))
        stripe = self.total_banks * self.row_slice_bytes
        if self.chip_chunk_bytes % stripe:
            raise ConfigError(
                f"chip_chunk_bytes: {self.chip_chunk_bytes} is not a multiple of "
                f"total banks x row_slice_bytes = {stripe}"
            )
        if module_capacity_bits(self) > _MAX_BITS:
            raise ConfigError("geometry: module capacity overflows 64-bit arithmetic")

    @cached_property
    def total_banks(self) -> int:
        """Banks per chip."""
        return self.bank_groups * self.banks_per_group

    @property
    def row_bytes(self) -> int:
        return self.columns_per_row * self.column_width_bits // 8

    @cached_property
    def rows_per_chunk(self) -> int:
        """Rows of one bank consumed by one chip chunk."""
        return self.chip_chunk_bytes // (self.row_slice_bytes * self.total_banks)

    @cached_property
    def module_bytes(self) -> int:
        return module_capacity_bits(self) // 8

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> DramGeometry:
        """Build a geometry from string or int values keyed by field name.

        Absent keys fall back to the defaults; unknown keys are rejected.
        """
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"geometry: unknown key {key!r}")
            if key == "interleave_mode":
                kwargs[key] = InterleaveMode.parse(raw)
                continue
            try:
                kwargs[key] = int(str(raw).strip(), 0) if isinstance(raw, str) else int(raw)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        return cls(**kwargs)


def bank_capacity_bits(geometry: DramGeometry) -> int:
    return geometry.rows_per_bank * geometry.columns_per_row * geometry.column_width_bits


def chip_capacity_bits(geometry: DramGeometry) -> int:
    return bank_capacity_bits(geometry) * geometry.bank_groups * geometry.banks_per_group


def module_capacity_bits(geometry: DramGeometry) -> int:
    return chip_capacity_bits(geometry) * geometry.chips
