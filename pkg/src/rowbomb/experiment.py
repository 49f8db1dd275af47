"""Sweep points, repeated runs, victim statistics and CSV output."""

from __future__ import annotations

import csv
import enum
import math
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from rowbomb.address_map import check_mapping, max_same_bank_offsets
from rowbomb.bank_engine import MemoryController, Op, OutcomeKind, Policy, TimingParams
from rowbomb.errors import ComparisonError, ConfigError
from rowbomb.geometry import DramGeometry
from rowbomb.workloads import (
    IterationPlan,
    TraceRecord,
    build_bomb_actors,
    build_navigate_actors,
    build_victim,
    nsamples,
    run_actors,
    victim_records,
)

KIB = 1024
MIB = 1024 * KIB


class Mode(enum.Enum):
    NAVIGATE = "navigate"
    BOMB = "bomb"
    VICTIM_ONLY = "victim"

    @classmethod
    def parse(cls, value: str | Mode) -> Mode:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"navigate": cls.NAVIGATE, "bomb": cls.BOMB, "rowconflict": cls.BOMB,
                   "victim": cls.VICTIM_ONLY, "victimonly": cls.VICTIM_ONLY}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"mode: unknown mode {value!r} (use navigate, bomb or victim)") from None


def format_size(nbytes: int) -> str:
    for unit, scale in (("M", MIB), ("K", KIB)):
        if nbytes >= scale and nbytes % scale == 0:
            return f"{nbytes // scale}{unit}"
    return str(nbytes)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: Mode = Mode.NAVIGATE
    benchmark_bytes: int = 1 * KIB
    workload_bytes: int = 256 * KIB
    attackers: int = 1
    repetitions: int = 100
    policy: Policy = Policy.FCFS
    timing: TimingParams = field(default_factory=TimingParams)
    seed: int = 0
    op: Op = Op.WRITE
    geometry: DramGeometry = field(default_factory=DramGeometry)
    iterations: int | None = None
    tie_noise: bool = False

    @property
    def block_slots(self) -> int:
        return self.workload_bytes // self.benchmark_bytes

    @property
    def num_samples(self) -> int:
        """Design-of-experiment sample count: block slots x repetitions."""
        return self.block_slots * self.repetitions

    @property
    def run_id(self) -> str:
        return (f"{self.mode.value}_{self.op.value}_b{format_size(self.benchmark_bytes)}"
                f"_w{format_size(self.workload_bytes)}_a{self.attackers}")

    def validate(self) -> None:
        g = self.geometry
        check_mapping(g)
        slice_bytes = g.row_slice_bytes
        if self.benchmark_bytes <= 0 or self.benchmark_bytes % slice_bytes:
            raise ConfigError(f"benchmark_bytes: {self.benchmark_bytes} is not a positive multiple of {slice_bytes}")
        if self.workload_bytes <= 0 or self.workload_bytes % self.benchmark_bytes:
            raise ConfigError(
                f"workload_bytes: {self.workload_bytes} is not a positive multiple of "
                f"benchmark_bytes {self.benchmark_bytes}"
            )
        if self.workload_bytes > g.module_bytes:
            raise ConfigError(f"workload_bytes: {self.workload_bytes} exceeds module capacity {g.module_bytes}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions: must be at least 1, got {self.repetitions}")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError(f"iterations: must be at least 1, got {self.iterations}")
        if self.mode is Mode.VICTIM_ONLY:
            if self.attackers != 0:
                raise ConfigError(f"attackers: victim-only runs take 0 attackers, got {self.attackers}")
            return
        if self.attackers < 1:
            raise ConfigError(f"attackers: must be at least 1, got {self.attackers}")
        if self.block_slots < self.attackers + 1:
            raise ConfigError(
                f"workload_bytes / benchmark_bytes = {self.block_slots} slots must be >= "
                f"attackers + 1 = {self.attackers + 1}"
            )
        if self.mode is Mode.BOMB:
            if self.benchmark_bytes != slice_bytes:
                raise ConfigError(f"benchmark_bytes: bomb runs use {format_size(slice_bytes)} bursts, "
                                  f"got {format_size(self.benchmark_bytes)}")
            limit = max_same_bank_offsets(g, 0)
            if self.attackers > limit:
                raise ConfigError(f"attackers exceeds rows available (max {limit}), got {self.attackers}")
            far = self.attackers * g.row_slice_bytes * g.total_banks + self.benchmark_bytes
            if far > self.workload_bytes:
                raise ConfigError(f"workload_bytes: bomb offsets need at least {far} bytes, got {self.workload_bytes}")

    def plan(self) -> IterationPlan:
        if self.iterations is not None:
            count = self.iterations
        elif self.mode is Mode.VICTIM_ONLY:
            count = self.block_slots
        else:
            count = nsamples(self.block_slots, self.attackers)
        return IterationPlan(count, self.block_slots)

    def actors(self):
        if self.mode is Mode.NAVIGATE:
            return build_navigate_actors(self.attackers, self.benchmark_bytes, self.op)
        if self.mode is Mode.BOMB:
            return build_bomb_actors(self.geometry, self.attackers, self.benchmark_bytes, self.op)
        return [build_victim(self.benchmark_bytes, self.op)]


@dataclass
class RunSummary:
    run_id: str
    mode: Mode
    op: Op
    benchmark_bytes: int
    workload_bytes: int
    attackers: int
    repetitions: int
    policy: Policy
    num_samples: int
    victim_iterations: int
    victim_total_cycles: float
    victim_total_std: float
    victim_mean_cycles: float
    victim_max_cycles: float
    victim_p99_cycles: float
    conflict_count: float
    hit_count: float
    open_count: float
    series: list[float] = field(default_factory=list, repr=False)
    series_std: list[float] = field(default_factory=list, repr=False)

    def row(self) -> dict[str, str]:
        return {name: _fmt(getattr(self, name)) for name in SUMMARY_COLUMNS}


SUMMARY_COLUMNS = tuple(f.name for f in fields(RunSummary) if f.name not in ("series", "series_std"))
SERIES_COLUMNS = ("run_id", "iteration", "victim_cycles_mean")


def _fmt(value) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return f"{value:.3f}"
    return str(value)


def run_once(cfg: ExperimentConfig, rep: int = 0) -> list[TraceRecord]:
    """One run on a fresh controller; returns the full trace."""
    rng = random.Random(f"{cfg.seed}:{rep}") if cfg.tie_noise else None
    controller = MemoryController(cfg.geometry, cfg.timing, cfg.policy, rng=rng)
    return run_actors(cfg.actors(), cfg.plan(), controller, run_id=f"{cfg.run_id}_r{rep}")


def _p99(values: Sequence[float]) -> float:
    if len(values) < 2:
        return float(values[0])
    return statistics.quantiles(values, n=100, method="inclusive")[98]


def run_experiment(cfg: ExperimentConfig) -> RunSummary:
    cfg.validate()
    runs = []
    for rep in range(cfg.repetitions):
        runs.append(victim_records(run_once(cfg, rep)))
    # tie noise can change the victim's iteration count; keep the common prefix
    length = min(len(v) for v in runs)
    runs = [v[:length] for v in runs]
    per_iter = list(zip(*[[r.cycles for r in v] for v in runs]))
    series = [statistics.fmean(col) for col in per_iter]
    series_std = [statistics.pstdev(col) for col in per_iter]
    totals = [sum(r.cycles for r in v) for v in runs]
    pooled = sorted(r.cycles for v in runs for r in v)

    def count(kind: OutcomeKind) -> float:
        return sum(1 for v in runs for r in v if r.outcome_kind is kind) / len(runs)

    return RunSummary(
        run_id=cfg.run_id,
        mode=cfg.mode,
        op=cfg.op,
        benchmark_bytes=cfg.benchmark_bytes,
        workload_bytes=cfg.workload_bytes,
        attackers=cfg.attackers,
        repetitions=cfg.repetitions,
        policy=cfg.policy,
        num_samples=cfg.num_samples,
        victim_iterations=length,
        victim_total_cycles=statistics.fmean(totals),
        victim_total_std=statistics.pstdev(totals),
        victim_mean_cycles=statistics.fmean(pooled),
        victim_max_cycles=float(pooled[-1]),
        victim_p99_cycles=_p99(pooled),
        conflict_count=count(OutcomeKind.ROW_CONFLICT),
        hit_count=count(OutcomeKind.ROW_HIT),
        open_count=count(OutcomeKind.ROW_OPEN_FROM_IDLE),
        series=series,
        series_std=series_std,
    )


def percent_increase(navigate_total: float, bomb_total: float) -> int:
    """Victim slowdown of the bomb over Navigate, rounded half-up to a whole percent."""
    if navigate_total <= 0:
        raise ComparisonError(f"navigate total must be positive, got {navigate_total}")
    return math.floor((bomb_total - navigate_total) / navigate_total * 100 + 0.5)


@dataclass(frozen=True)
class SlowdownReport:
    attackers: int
    benchmark_bytes: int
    workload_bytes: int
    navigate_total: float
    bomb_total: float
    percent: int

    def line(self) -> str:
        sign = "+" if self.percent >= 0 else ""
        return (f"{self.attackers:>9} | {format_size(self.benchmark_bytes):>9} | "
                f"{format_size(self.workload_bytes):>6} | {_fmt(self.navigate_total):>12} | "
                f"{_fmt(self.bomb_total):>12} | {sign}{self.percent}%")


REPORT_HEADER = (f"{'Attackers':>9} | {'Benchmark':>9} | {'Size':>6} | {'Navigate':>12} | "
                 f"{'RowConflict':>12} | +/- %")

_MATCHED_FACTORS = ("benchmark_bytes", "workload_bytes", "attackers", "op", "policy")


def compare_modes(navigate: RunSummary, bomb: RunSummary) -> SlowdownReport:
    if navigate.mode is not Mode.NAVIGATE or bomb.mode is not Mode.BOMB:
        raise ComparisonError(f"expected navigate vs bomb, got {navigate.mode.value} vs {bomb.mode.value}")
    for name in _MATCHED_FACTORS:
        if getattr(navigate, name) != getattr(bomb, name):
            raise ComparisonError(
                f"{name} differs: {_fmt(getattr(navigate, name))} vs {_fmt(getattr(bomb, name))}"
            )
    return SlowdownReport(
        navigate.attackers, navigate.benchmark_bytes, navigate.workload_bytes,
        navigate.victim_total_cycles, bomb.victim_total_cycles,
        percent_increase(navigate.victim_total_cycles, bomb.victim_total_cycles),
    )


@dataclass
class SweepPoint:
    config: ExperimentConfig
    summary: RunSummary | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_point(cfg: ExperimentConfig) -> SweepPoint:
    try:
        return SweepPoint(cfg, run_experiment(cfg))
    except (ConfigError, ValueError, IndexError) as exc:
        return SweepPoint(cfg, error=f"{type(exc).__name__}: {exc}")


def sweep(grid: Sequence[ExperimentConfig], workers: int = 1, progress=None) -> list[SweepPoint]:
    """Run every grid point; failures are captured per point.

    Points are independent, so ``workers > 1`` runs them in a process pool.
    Results keep the input order either way.
    """
    if not grid:
        raise ConfigError("grid: no experiment points")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, grid))
        if progress is not None:
            for i, point in enumerate(results):
                progress(i, point)
        return results
    results = []
    for i, cfg in enumerate(grid):
        point = _run_point(cfg)
        if progress is not None:
            progress(i, point)
        results.append(point)
    return results


def navigate_grid(repetitions: int = 100, attackers: int = 1, **overrides) -> list[ExperimentConfig]:
    """The eight benchmark/workload pairs of the Navigate design of experiment."""
    pairs = [
        (1 * KIB, 256 * KIB), (1 * KIB, 512 * KIB),
        (4 * KIB, 1 * MIB), (4 * KIB, 2 * MIB),
        (8 * KIB, 2 * MIB), (8 * KIB, 4 * MIB),
        (16 * KIB, 2 * MIB), (16 * KIB, 4 * MIB),
    ]
    return [
        ExperimentConfig(benchmark_bytes=b, workload_bytes=w, attackers=attackers,
                         repetitions=repetitions, **overrides)
        for b, w in pairs
    ]


def write_summary_csv(path: str | Path, summaries: Iterable[RunSummary]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for s in summaries:
            writer.writerow(s.row())


def write_series_csv(path: str | Path, summary: RunSummary) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_COLUMNS)
        for i, value in enumerate(summary.series):
            writer.writerow((summary.run_id, i, _fmt(value)))


def read_summary_csv(path: str | Path) -> list[RunSummary]:
    """Parse a summary CSV back into RunSummary objects (series left empty)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SUMMARY_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ConfigError(f"{path}: missing column {missing[0]!r}")
        rows = list(reader)
    out = []
    for row in rows:
        try:
            out.append(RunSummary(
                run_id=row["run_id"],
                mode=Mode.parse(row["mode"]),
                op=Op(row["op"]),
                benchmark_bytes=int(row["benchmark_bytes"]),
                workload_bytes=int(row["workload_bytes"]),
                attackers=int(row["attackers"]),
                repetitions=int(row["repetitions"]),
                policy=Policy.parse(row["policy"]),
                num_samples=int(row["num_samples"]),
                victim_iterations=int(row["victim_iterations"]),
                **{name: float(row[name]) for name in SUMMARY_COLUMNS[10:]},
            ))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: malformed row {row!r}: {exc}") from None
    return out
