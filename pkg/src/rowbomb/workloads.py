"""Closed-loop victim and attacker actors.

Actor 0 is the victim: it writes (or reads) the same benchmark-sized slot
at offset 0 every iteration. Navigate attackers sweep the block with the
strided index ``id_cpu + num_attacker_threads * iteration``; bomb attackers
sit on fixed offsets that share the victim's bank in other rows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from rowbomb.address_map import decompose, same_bank_offsets
from rowbomb.bank_engine import MemoryController, MemoryRequest, Op, OutcomeKind, ServiceRecord
from rowbomb.errors import ConfigError
from rowbomb.geometry import DramGeometry


class Role(enum.Enum):
    VICTIM = "victim"
    NAVIGATE = "navigate"
    BOMB = "bomb"


@dataclass(frozen=True)
class ActorConfig:
    actor_id: int
    role: Role
    benchmark_bytes: int = 1024
    op: Op = Op.WRITE
    fixed_offset: int | None = None


@dataclass(frozen=True)
class IterationPlan:
    nsamples: int
    block_slots: int

    def __post_init__(self) -> None:
        if self.nsamples < 1:
            raise ConfigError(f"nsamples: must be at least 1, got {self.nsamples}")
        if self.block_slots < 1:
            raise ConfigError(f"block_slots: must be at least 1, got {self.block_slots}")


@dataclass(frozen=True, slots=True)
class TraceRecord:
    run_id: str
    actor_id: int
    role: Role
    iteration: int
    slot_or_offset: int
    issue_cycle: int
    completion_cycle: int
    cycles: int
    outcome_kind: OutcomeKind
    # who opened the row a conflict evicted (not part of the CSV stream)
    displaced_actor: int | None = None
    displaced_offset: int | None = None


def navigate_index(id_cpu: int, num_attacker_threads: int, num_of_iteration: int) -> int:
    if not 1 <= id_cpu <= num_attacker_threads:
        raise ConfigError(f"id_cpu: {id_cpu} not in [1, {num_attacker_threads}]")
    if num_of_iteration < 0:
        raise ConfigError(f"num_of_iteration: must be >= 0, got {num_of_iteration}")
    return id_cpu + num_attacker_threads * num_of_iteration


def nsamples(block_slots: int, num_attacker_threads: int) -> int:
    """Iterations per attacker; slot 0 is reserved for the victim."""
    if block_slots < 2:
        raise ConfigError(f"block_slots: must be at least 2, got {block_slots}")
    if num_attacker_threads < 1:
        raise ConfigError(f"num_attacker_threads: must be at least 1, got {num_attacker_threads}")
    return (block_slots - 1) // num_attacker_threads


def build_victim(benchmark_bytes: int = 1024, op: Op = Op.WRITE) -> ActorConfig:
    return ActorConfig(0, Role.VICTIM, benchmark_bytes, op, fixed_offset=0)


def build_navigate_actors(attackers: int, benchmark_bytes: int = 1024, op: Op = Op.WRITE) -> list[ActorConfig]:
    if attackers < 1:
        raise ConfigError(f"attackers: must be at least 1, got {attackers}")
    return [build_victim(benchmark_bytes, op)] + [
        ActorConfig(k, Role.NAVIGATE, benchmark_bytes, op) for k in range(1, attackers + 1)
    ]


def build_bomb_actors(
    geometry: DramGeometry, attackers: int, benchmark_bytes: int = 1024, op: Op = Op.WRITE
) -> list[ActorConfig]:
    if benchmark_bytes != geometry.row_slice_bytes:
        raise ConfigError(
            f"benchmark_bytes: the bomb uses one-slice bursts ({geometry.row_slice_bytes}), "
            f"got {benchmark_bytes}"
        )
    offsets = same_bank_offsets(geometry, 0, attackers)
    return [build_victim(benchmark_bytes, op)] + [
        ActorConfig(k, Role.BOMB, benchmark_bytes, op, fixed_offset=off)
        for k, off in enumerate(offsets, start=1)
    ]


def _validate(actors: Sequence[ActorConfig], plan: IterationPlan, geometry: DramGeometry) -> int:
    victims = [a for a in actors if a.role is Role.VICTIM]
    if len(victims) != 1:
        raise ConfigError(f"actors: expected exactly one victim, got {len(victims)}")
    victim = victims[0]
    if victim.actor_id != 0 or victim.fixed_offset != 0:
        raise ConfigError("victim: must be actor 0 at offset 0")
    ids = [a.actor_id for a in actors]
    if len(set(ids)) != len(ids):
        raise ConfigError("actors: duplicate actor ids")
    sizes = {a.benchmark_bytes for a in actors}
    if len(sizes) != 1:
        raise ConfigError(f"benchmark_bytes: actors disagree {sorted(sizes)}")
    size = sizes.pop()
    if size <= 0 or size % geometry.row_slice_bytes:
        raise ConfigError(f"benchmark_bytes: {size} is not a multiple of {geometry.row_slice_bytes}")
    block_bytes = plan.block_slots * size
    navigators = sorted(a.actor_id for a in actors if a.role is Role.NAVIGATE)
    if navigators and navigators != list(range(1, len(navigators) + 1)):
        raise ConfigError("navigate attackers: ids must be 1..N")
    if navigators and navigate_index(len(navigators), len(navigators), plan.nsamples - 1) >= plan.block_slots:
        raise ConfigError(
            f"nsamples: {plan.nsamples} iterations of {len(navigators)} attackers overrun "
            f"the {plan.block_slots}-slot block"
        )
    bomb_rows = set()
    victim_addr = decompose(geometry, 0)
    for a in actors:
        if a.role is Role.NAVIGATE:
            continue
        if a.fixed_offset is None or a.fixed_offset < 0 or a.fixed_offset + size > block_bytes:
            raise ConfigError(f"actor {a.actor_id}: fixed_offset {a.fixed_offset} outside the block")
        if a.role is Role.BOMB:
            addr = decompose(geometry, a.fixed_offset)
            if (addr.chip, addr.flat_bank) != (victim_addr.chip, victim_addr.flat_bank) \
                    or addr.row == victim_addr.row or addr.row in bomb_rows:
                raise ConfigError(f"actor {a.actor_id}: offset {a.fixed_offset} is not a distinct row of the victim's bank")
            bomb_rows.add(addr.row)
    return len(navigators)


def run_actors(
    actors: Sequence[ActorConfig],
    plan: IterationPlan,
    controller: MemoryController,
    run_id: str = "run",
) -> list[TraceRecord]:
    """Release every actor at cycle 0 and run them closed-loop.

    Each actor issues its next request the cycle its previous one completes.
    Attackers stop after ``plan.nsamples`` iterations. The victim runs at
    least ``plan.nsamples`` iterations and keeps going until the last
    attacker has finished, so its series spans the whole traversal.
    """
    threads = _validate(actors, plan, controller.geometry)
    by_id = {a.actor_id: a for a in actors}
    done = {a.actor_id: 0 for a in actors}
    attackers_left = sum(1 for a in actors if a.role is not Role.VICTIM)
    trace: list[TraceRecord] = []

    def request(actor: ActorConfig, iteration: int, cycle: int) -> MemoryRequest:
        if actor.role is Role.NAVIGATE:
            offset = navigate_index(actor.actor_id, threads, iteration) * actor.benchmark_bytes
        else:
            offset = actor.fixed_offset
        return MemoryRequest(actor.actor_id, offset, actor.op, actor.benchmark_bytes, cycle)

    def on_complete(record: ServiceRecord) -> None:
        nonlocal attackers_left
        req, out = record.request, record.outcome
        actor = by_id[req.actor_id]
        iteration = done[actor.actor_id]
        done[actor.actor_id] = iteration + 1
        displaced = out.displaced_by or (None, None)
        trace.append(TraceRecord(
            run_id, actor.actor_id, actor.role, iteration,
            req.offset // actor.benchmark_bytes if actor.role is Role.NAVIGATE else req.offset,
            req.issue_cycle, out.completion_cycle, out.completion_cycle - req.issue_cycle,
            out.kind, displaced[0], displaced[1],
        ))
        now = out.completion_cycle
        if actor.role is Role.VICTIM:
            if done[0] < plan.nsamples or attackers_left > 0:
                controller.submit(request(actor, done[0], now))
        elif done[actor.actor_id] < plan.nsamples:
            controller.submit(request(actor, done[actor.actor_id], now))
        else:
            attackers_left -= 1

    for actor in sorted(actors, key=lambda a: a.actor_id):
        controller.submit(request(actor, 0, 0))
    controller.run(on_complete)
    trace.sort(key=lambda r: (r.actor_id, r.iteration))
    return trace


def victim_records(trace: Sequence[TraceRecord]) -> list[TraceRecord]:
    return [r for r in trace if r.role is Role.VICTIM]
