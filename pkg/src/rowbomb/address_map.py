"""Offset -> (chip, bank group, bank, row, column) decomposition.

High-order mode follows the empirically derived layout of the modeled
DIMM: consecutive 1 KB slices rotate through the 16 banks of one chip, a
chip serves a 128 KB chunk before the next chip takes over, and after all
eight chips (1 MB) the rotation returns to chip 0 with fresh rows.
Low-order mode rotates chips at slice granularity instead.
"""

from __future__ import annotations

from dataclasses import dataclass

from rowbomb.errors import CapacityError, ConfigError
from rowbomb.geometry import DramGeometry, InterleaveMode


@dataclass(frozen=True)
class DramAddress:
    chip: int
    bank_group: int
    bank: int
    flat_bank: int
    row: int
    column: int

    def csv(self, offset: int) -> str:
        return (f"{offset},{self.chip},{self.bank_group},{self.bank},"
                f"{self.flat_bank},{self.row},{self.column}")


@dataclass(frozen=True)
class ContiguousBlock:
    """The physically contiguous kmalloc() block all actors index into."""

    size_bytes: int = 1 << 20
    base_offset: int = 0

    def validate(self, geometry: DramGeometry) -> None:
        if self.size_bytes <= 0 or self.size_bytes % geometry.row_slice_bytes:
            raise ConfigError(
                f"size_bytes: {self.size_bytes} is not a positive multiple of "
                f"row_slice_bytes ({geometry.row_slice_bytes})"
            )
        if self.base_offset < 0 or self.base_offset + self.size_bytes > geometry.module_bytes:
            raise ConfigError("block does not fit in the module")


def check_mapping(geometry: DramGeometry) -> None:
    """Raise ConfigError unless the geometry supports address decomposition."""
    if geometry.row_slice_bytes * 8 != geometry.columns_per_row * geometry.column_width_bits:
        raise ConfigError(
            "row_slice_bytes: must equal columns_per_row x column_width_bits / 8 "
            f"({geometry.columns_per_row * geometry.column_width_bits / 8:g}), "
            f"got {geometry.row_slice_bytes}"
        )
    if (geometry.interleave_mode is InterleaveMode.HIGH_ORDER
            and geometry.rows_per_bank % geometry.rows_per_chunk):
        raise ConfigError(
            f"rows_per_bank: {geometry.rows_per_bank} is not a multiple of the "
            f"{geometry.rows_per_chunk} rows consumed per chip chunk"
        )


def decompose(geometry: DramGeometry, offset: int) -> DramAddress:
    capacity = geometry.module_bytes
    if not 0 <= offset < capacity:
        raise IndexError(f"offset {offset} outside module capacity [0, {capacity})")
    slice_bytes = geometry.row_slice_bytes
    banks = geometry.total_banks
    column = offset % slice_bytes
    slice_index = offset // slice_bytes
    if geometry.interleave_mode is InterleaveMode.HIGH_ORDER:
        flat_bank = slice_index % banks
        chip = (offset // geometry.chip_chunk_bytes) % geometry.chips
        epoch = offset // (geometry.chip_chunk_bytes * geometry.chips)
        row = (offset % geometry.chip_chunk_bytes) // (slice_bytes * banks) + epoch * geometry.rows_per_chunk
    else:
        chip = slice_index % geometry.chips
        rest = slice_index // geometry.chips
        flat_bank = rest % banks
        row = rest // banks
    bank_group, bank = divmod(flat_bank, geometry.banks_per_group)
    return DramAddress(chip, bank_group, bank, flat_bank, row, column)


def same_bank_stride(geometry: DramGeometry) -> int:
    """Byte distance between consecutive rows of one bank."""
    stride = geometry.row_slice_bytes * geometry.total_banks
    if geometry.interleave_mode is InterleaveMode.LOW_ORDER:
        stride *= geometry.chips
    return stride


def max_same_bank_offsets(geometry: DramGeometry, victim_offset: int) -> int:
    """How many other rows of the victim's bank are reachable by striding forward.

    In high-order mode the walk never leaves the victim's chip chunk.
    """
    stride = same_bank_stride(geometry)
    if geometry.interleave_mode is InterleaveMode.HIGH_ORDER:
        room = geometry.chip_chunk_bytes - victim_offset % geometry.chip_chunk_bytes
    else:
        room = geometry.module_bytes - victim_offset
    return (room - 1) // stride


def same_bank_offsets(geometry: DramGeometry, victim_offset: int, count: int) -> list[int]:
    """Offsets sharing the victim's chip and bank, each in a different row.

    The stride skips the other 15 banks of the chip, so every attacker lands
    on the victim's bank. With the default geometry at most 7 fit in the
    victim's 128 KB chunk.
    """
    if count < 1:
        raise ConfigError(f"count: must be at least 1, got {count}")
    decompose(geometry, victim_offset)
    limit = max_same_bank_offsets(geometry, victim_offset)
    if count > limit:
        raise CapacityError(f"attackers exceeds rows available (max {limit}), got {count}")
    stride = same_bank_stride(geometry)
    return [victim_offset + k * stride for k in range(1, count + 1)]
