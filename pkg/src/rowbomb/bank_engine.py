"""Row-buffer state machine and the cycle-clocked memory controller.

Every bank holds at most one open row. A slice access to the open row costs
CAS + bus, to an idle bank ACT + CAS + bus, and to a different row
PRE + ACT + CAS + bus. The controller keeps one in-order queue per actor and
dispatches queue heads whose first bank is free, choosing among them with
FCFS or FR-FCFS. A dispatched request reserves its banks slice by slice, so
requests from different actors interleave only at request granularity.
"""

from __future__ import annotations

import enum
import heapq
import random
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

from rowbomb.address_map import DramAddress, check_mapping, decompose
from rowbomb.errors import ConfigError, ModelError
from rowbomb.geometry import DramGeometry

BankKey = tuple[int, int]  # (chip, flat_bank)


class OutcomeKind(enum.Enum):
    ROW_HIT = "hit"
    ROW_OPEN_FROM_IDLE = "open"
    ROW_CONFLICT = "conflict"


class Op(enum.Enum):
    READ = "read"
    WRITE = "write"


class Policy(enum.Enum):
    FCFS = "fcfs"
    FRFCFS = "frfcfs"

    @classmethod
    def parse(cls, value: str | Policy) -> Policy:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "")
        for member in cls:
            if member.value == key:
                return member
        raise ConfigError(f"policy: unknown policy {value!r} (use fcfs or frfcfs)")


@dataclass(frozen=True)
class TimingParams:
    """Cycle costs. Defaults are the DDR4-2666 19-19-19 speed grade."""

    cas_cycles: int = 19
    rcd_cycles: int = 19
    rp_cycles: int = 19
    refresh_interval_cycles: int = 0
    refresh_duration_cycles: int = 350
    bus_transfer_cycles: int = 4

    def __post_init__(self) -> None:
        for name in ("cas_cycles", "rcd_cycles", "rp_cycles"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        for name in ("refresh_interval_cycles", "refresh_duration_cycles", "bus_transfer_cycles"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0, got {getattr(self, name)}")

    @cached_property
    def _latencies(self) -> dict[OutcomeKind, int]:
        base = self.cas_cycles + self.bus_transfer_cycles
        return {
            OutcomeKind.ROW_HIT: base,
            OutcomeKind.ROW_OPEN_FROM_IDLE: self.rcd_cycles + base,
            OutcomeKind.ROW_CONFLICT: self.rp_cycles + self.rcd_cycles + base,
        }

    def latency(self, kind: OutcomeKind) -> int:
        return self._latencies[kind]


@dataclass(frozen=True, slots=True)
class BankState:
    open_row: int | None = None
    busy_until: int = 0

    @property
    def idle(self) -> bool:
        return self.open_row is None


@dataclass(frozen=True, slots=True)
class MemoryRequest:
    actor_id: int
    offset: int
    op: Op = Op.WRITE
    size_bytes: int = 1024
    issue_cycle: int = 0


@dataclass(frozen=True, slots=True)
class AccessOutcome:
    """Result of servicing one request.

    ``kind`` is the classification of the first slice. ``displaced_by`` is
    the (actor_id, request offset) that had opened the row a first-slice
    conflict evicted, or None.
    """

    kind: OutcomeKind
    latency_cycles: int
    slices: int
    start_cycle: int
    completion_cycle: int
    displaced_by: tuple[int, int] | None = None


@dataclass(frozen=True, slots=True)
class TraceEvent:
    cycle: int
    actor_id: int
    offset: int
    chip: int
    flat_bank: int
    row: int
    kind: OutcomeKind
    latency_cycles: int


def access_slice(
    bank: BankState, row: int, now: int, params: TimingParams, rows: int | None = None
) -> tuple[OutcomeKind, int, BankState]:
    if row < 0 or (rows is not None and row >= rows):
        raise ModelError(f"row {row} outside bank of {rows} rows")
    if now < 0:
        raise ModelError(f"negative cycle {now}")
    if bank.open_row is None:
        kind = OutcomeKind.ROW_OPEN_FROM_IDLE
    elif bank.open_row == row:
        kind = OutcomeKind.ROW_HIT
    else:
        kind = OutcomeKind.ROW_CONFLICT
    start = max(now, bank.busy_until)
    completion = start + params.latency(kind)
    return kind, completion, BankState(row, completion)


def request_slices(geometry: DramGeometry, req: MemoryRequest) -> int:
    if req.size_bytes <= 0 or req.size_bytes % geometry.row_slice_bytes:
        raise ConfigError(
            f"size_bytes: {req.size_bytes} is not a positive multiple of {geometry.row_slice_bytes}"
        )
    return req.size_bytes // geometry.row_slice_bytes


def service_request(
    req: MemoryRequest,
    geometry: DramGeometry,
    params: TimingParams,
    banks: dict[BankKey, BankState],
    now: int,
    openers: dict[BankKey, tuple[int, int]] | None = None,
    locate: Callable[[int], DramAddress] | None = None,
) -> AccessOutcome:
    """Apply a request's 1 KB slices in offset order, updating ``banks`` in place."""
    locate = locate or (lambda off: decompose(geometry, off))
    n = request_slices(geometry, req)
    step = geometry.row_slice_bytes
    rows = geometry.rows_per_bank
    t = now
    first_kind = None
    first_start = 0
    displaced = None
    for i in range(n):
        addr = locate(req.offset + i * step)
        key = (addr.chip, addr.flat_bank)
        bank = banks.get(key, BankState())
        kind, completion, banks[key] = access_slice(bank, addr.row, t, params, rows)
        if first_kind is None:
            first_kind = kind
            first_start = max(t, bank.busy_until)
            if kind is OutcomeKind.ROW_CONFLICT and openers is not None:
                displaced = openers.get(key)
        if openers is not None and kind is not OutcomeKind.ROW_HIT:
            openers[key] = (req.actor_id, req.offset)
        t = completion
    return AccessOutcome(first_kind, t - first_start, n, first_start, t, displaced)


def arbitrate(
    pending: Sequence[MemoryRequest],
    now: int,
    policy: Policy = Policy.FCFS,
    row_hit: Callable[[MemoryRequest], bool] | None = None,
    rng: random.Random | None = None,
) -> MemoryRequest:
    """Pick the next request to service.

    FCFS orders by issue cycle, then lowest actor id (or a seeded random
    draw when ``rng`` is given). FR-FCFS first prefers requests whose
    first slice hits an open row.
    """
    if not pending:
        raise ValueError("arbitrate: no pending requests")
    if policy is Policy.FRFCFS and row_hit is None:
        raise ValueError("arbitrate: FR-FCFS needs a row_hit predicate")
    best = None
    best_key = None
    for req in pending:
        tie = rng.random() if rng is not None else 0.0
        key = (req.issue_cycle, tie, req.actor_id)
        if policy is Policy.FRFCFS:
            key = (not row_hit(req),) + key
        if best_key is None or key < best_key:
            best, best_key = req, key
    return best


def refresh_tick(banks: dict[BankKey, BankState], now: int, params: TimingParams) -> dict[BankKey, BankState]:
    """Close every row and block every bank for the refresh duration.

    A bank still busy at ``now`` finishes its reserved access first.
    """
    if params.refresh_interval_cycles <= 0:
        return dict(banks)
    if now % params.refresh_interval_cycles:
        raise ModelError(f"refresh at cycle {now} is off the {params.refresh_interval_cycles}-cycle grid")
    return {
        key: BankState(None, max(state.busy_until, now) + params.refresh_duration_cycles)
        for key, state in banks.items()
    }


# decompositions shared by every controller built on the same geometry
_ADDRESS_TABLES: dict[DramGeometry, dict[int, DramAddress]] = {}


@dataclass(frozen=True, slots=True)
class ServiceRecord:
    request: MemoryRequest
    outcome: AccessOutcome


class MemoryController:
    """Deterministic event loop serializing actor requests onto banks.

    ``run`` processes, at each cycle: completion callbacks (which may submit
    follow-up requests issued at that cycle), a refresh if due, then
    dispatch of every eligible queue head in arbitration order.
    """

    def __init__(
        self,
        geometry: DramGeometry,
        timing: TimingParams | None = None,
        policy: Policy | str = Policy.FCFS,
        rng: random.Random | None = None,
        trace_hook: Callable[[TraceEvent], None] | None = None,
    ):
        check_mapping(geometry)
        self.geometry = geometry
        self.timing = timing or TimingParams()
        self.policy = Policy.parse(policy)
        self.rng = rng
        self.trace_hook = trace_hook
        self.banks: dict[BankKey, BankState] = {
            (chip, bank): BankState()
            for chip in range(geometry.chips)
            for bank in range(geometry.total_banks)
        }
        self.openers: dict[BankKey, tuple[int, int]] = {}
        self.now = 0
        self._queues: dict[int, deque[MemoryRequest]] = {}
        self._completions: list[tuple[int, int, int, ServiceRecord]] = []
        self._seq = 0
        interval = self.timing.refresh_interval_cycles
        self._next_refresh = interval if interval > 0 else None
        self._addr = _ADDRESS_TABLES.setdefault(geometry, {})

    def locate(self, offset: int) -> DramAddress:
        addr = self._addr.get(offset)
        if addr is None:
            addr = self._addr[offset] = decompose(self.geometry, offset)
        return addr

    def submit(self, req: MemoryRequest) -> None:
        request_slices(self.geometry, req)
        if req.offset < 0 or req.offset + req.size_bytes > self.geometry.module_bytes:
            raise IndexError(
                f"request [{req.offset}, {req.offset + req.size_bytes}) outside module "
                f"capacity {self.geometry.module_bytes}"
            )
        queue = self._queues.setdefault(req.actor_id, deque())
        if queue and req.issue_cycle < queue[-1].issue_cycle:
            raise ConfigError(f"actor {req.actor_id}: requests must be submitted in issue order")
        queue.append(req)

    def submit_all(self, requests: Iterable[MemoryRequest]) -> None:
        for req in requests:
            self.submit(req)

    def _first_bank(self, req: MemoryRequest) -> BankKey:
        addr = self.locate(req.offset)
        return addr.chip, addr.flat_bank

    def _row_hit(self, req: MemoryRequest) -> bool:
        addr = self.locate(req.offset)
        return self.banks[(addr.chip, addr.flat_bank)].open_row == addr.row

    def _dispatch(self, req: MemoryRequest) -> ServiceRecord:
        outcome = service_request(
            req, self.geometry, self.timing, self.banks, self.now, self.openers, self.locate
        )
        record = ServiceRecord(req, outcome)
        if self.trace_hook is not None:
            addr = self.locate(req.offset)
            self.trace_hook(TraceEvent(
                outcome.start_cycle, req.actor_id, req.offset, addr.chip, addr.flat_bank,
                addr.row, outcome.kind, outcome.latency_cycles,
            ))
        self._seq += 1
        heapq.heappush(self._completions, (outcome.completion_cycle, req.actor_id, self._seq, record))
        return record

    def run(self, on_complete: Callable[[ServiceRecord], None] | None = None) -> list[ServiceRecord]:
        records: list[ServiceRecord] = []
        queues = self._queues
        banks = self.banks
        while True:
            now = self.now
            while self._completions and self._completions[0][0] <= now:
                record = heapq.heappop(self._completions)[3]
                if on_complete is not None:
                    on_complete(record)
            if self._next_refresh is not None and self._next_refresh <= now:
                self.banks = banks = refresh_tick(banks, self._next_refresh, self.timing)
                self._next_refresh += self.timing.refresh_interval_cycles
            while True:
                ready = [
                    q[0] for q in queues.values()
                    if q and q[0].issue_cycle <= now and banks[self._first_bank(q[0])].busy_until <= now
                ]
                if not ready:
                    break
                req = ready[0] if len(ready) == 1 else arbitrate(
                    ready, now, self.policy, self._row_hit, self.rng
                )
                queues[req.actor_id].popleft()
                records.append(self._dispatch(req))
            wake = [
                max(q[0].issue_cycle, banks[self._first_bank(q[0])].busy_until)
                for q in queues.values() if q
            ]
            if self._completions:
                wake.append(self._completions[0][0])
            if not wake:
                break
            nxt = min(wake)
            if self._next_refresh is not None:
                nxt = min(nxt, self._next_refresh)
            self.now = nxt
        return records
