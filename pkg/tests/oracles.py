"""Reference models kept independent of the code under test.

None of these import the address map or the controller; they re-derive the
same quantities from bit slicing, enumeration or a plain sequential loop.
"""

from __future__ import annotations

# default geometry as bit fields: 10 column bits, 4 bank bits, 3 row-in-chunk
# bits, 3 chip bits, remaining bits select the 1 MB epoch
COL_BITS, BANK_BITS, ROW_IN_CHUNK_BITS, CHIP_BITS = 10, 4, 3, 3


def bitslice_decompose(offset: int) -> tuple[int, int, int, int]:
    """(chip, flat_bank, row, column) for the default high-order layout."""
    column = offset & ((1 << COL_BITS) - 1)
    offset >>= COL_BITS
    bank = offset & ((1 << BANK_BITS) - 1)
    offset >>= BANK_BITS
    row_in_chunk = offset & ((1 << ROW_IN_CHUNK_BITS) - 1)
    offset >>= ROW_IN_CHUNK_BITS
    chip = offset & ((1 << CHIP_BITS) - 1)
    epoch = offset >> CHIP_BITS
    return chip, bank, (epoch << ROW_IN_CHUNK_BITS) | row_in_chunk, column


def enumerate_slices(n_slices: int, slice_bytes=1024, banks=16, chunk_bytes=131072, chips=8):
    """Walk slices in address order the way the controller fills chips.

    A chip takes a whole chunk, rotating banks every slice; each completed
    16-slice stripe consumes one row of every bank in that chip.
    """
    slices_per_chunk = chunk_bytes // slice_bytes
    stripes_done = [0] * chips
    out = []
    for i in range(n_slices):
        chip = (i // slices_per_chunk) % chips
        bank = i % banks
        out.append((i * slice_bytes, chip, bank, stripes_done[chip]))
        if bank == banks - 1:
            stripes_done[chip] += 1
    return out


def naive_replay(script, cas=19, rcd=19, rp=19, bus=4, slice_bytes=1024):
    """Sequential per-slice replay of a single-actor request script.

    Each request starts no earlier than its issue cycle, the previous
    request's start, and the moment its first bank frees. Returns
    (kind, completion) per request with kind in {"hit", "open", "conflict"}.
    """
    open_row: dict[tuple[int, int], int] = {}
    busy: dict[tuple[int, int], int] = {}
    last_start = 0
    results = []
    for req in script:
        t = max(req.issue_cycle, last_start)
        first_kind = None
        for i in range(req.size_bytes // slice_bytes):
            chip, bank, row, _ = bitslice_decompose(req.offset + i * slice_bytes)
            key = (chip, bank)
            start = max(t, busy.get(key, 0))
            if key not in open_row:
                kind, lat = "open", rcd + cas + bus
            elif open_row[key] == row:
                kind, lat = "hit", cas + bus
            else:
                kind, lat = "conflict", rp + rcd + cas + bus
            if first_kind is None:
                first_kind = kind
                last_start = start
            open_row[key] = row
            busy[key] = t = start + lat
        results.append((first_kind, t))
    return results
