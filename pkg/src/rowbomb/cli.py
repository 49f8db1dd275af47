"""Command-line front end: run, sweep, compare, decompose.

Exit status: 0 success, 1 configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from rowbomb.address_map import check_mapping, decompose
from rowbomb.bank_engine import Op, Policy, TimingParams
from rowbomb.errors import ComparisonError, ConfigError
from rowbomb.experiment import (
    REPORT_HEADER,
    ExperimentConfig,
    Mode,
    RunSummary,
    compare_modes,
    navigate_grid,
    read_summary_csv,
    run_experiment,
    sweep,
    write_series_csv,
    write_summary_csv,
)
from rowbomb.geometry import DramGeometry

EXIT_CONFIG = 1
EXIT_IO = 2

_UNITS = {"": 1, "B": 1, "K": 1 << 10, "KB": 1 << 10, "KIB": 1 << 10,
          "M": 1 << 20, "MB": 1 << 20, "MIB": 1 << 20, "G": 1 << 30, "GB": 1 << 30, "GIB": 1 << 30}

EXPERIMENT_KEYS = ("mode", "benchmark", "workload", "attackers", "repetitions", "policy",
                   "seed", "op", "iterations", "tie_noise")
TIMING_KEYS = tuple(f.name for f in dataclasses.fields(TimingParams))
GEOMETRY_KEYS = tuple(f.name for f in dataclasses.fields(DramGeometry))
OUTPUT_KEYS = ("dir",)


def parse_size(text: str | int) -> int:
    """'1K' -> 1024, '2M' -> 2097152; binary units, plain integers pass through."""
    if isinstance(text, int):
        return text
    m = re.fullmatch(r"\s*(\d+)\s*([A-Za-z]*)\s*", str(text))
    if not m or m.group(2).upper() not in _UNITS:
        raise ConfigError(f"size: cannot parse {text!r} (examples: 1K, 256K, 2M)")
    return int(m.group(1)) * _UNITS[m.group(2).upper()]


def _int_list(text: str, names: Sequence[str], flag: str) -> dict[str, int]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != len(names):
        raise ConfigError(f"{flag}: expected {len(names)} comma-separated integers, got {text!r}")
    try:
        return dict(zip(names, (int(p) for p in parts)))
    except ValueError:
        raise ConfigError(f"{flag}: expected integers, got {text!r}") from None


def _parse_bool(key: str, text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _parse_int(key: str, text: Any) -> int:
    try:
        return int(str(text).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _check_keys(section: str, values: dict[str, str], allowed: Sequence[str]) -> None:
    for key in values:
        if key not in allowed:
            raise ConfigError(f"[{section}]: unknown key {key!r} (valid: {', '.join(allowed)})")


@dataclasses.dataclass
class CliConfig:
    """Parsed configuration file.

    Sections: [geometry] and [timing] take DramGeometry / TimingParams field
    names; [experiment] holds defaults for run and for every grid point;
    each [grid.<name>] section is one sweep point overriding [experiment];
    [output] dir is the output directory.
    """

    geometry: dict[str, str] = dataclasses.field(default_factory=dict)
    timing: dict[str, str] = dataclasses.field(default_factory=dict)
    experiment: dict[str, str] = dataclasses.field(default_factory=dict)
    grid: list[tuple[str, dict[str, str]]] = dataclasses.field(default_factory=list)
    output: dict[str, str] = dataclasses.field(default_factory=dict)


def load_config(path: str | Path) -> CliConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = CliConfig()
    for section in parser.sections():
        values = dict(parser.items(section))
        if section == "geometry":
            _check_keys(section, values, GEOMETRY_KEYS)
            cfg.geometry = values
        elif section == "timing":
            _check_keys(section, values, TIMING_KEYS)
            cfg.timing = values
        elif section == "experiment":
            _check_keys(section, values, EXPERIMENT_KEYS)
            cfg.experiment = values
        elif section == "output":
            _check_keys(section, values, OUTPUT_KEYS)
            cfg.output = values
        elif section.startswith("grid."):
            _check_keys(section, values, EXPERIMENT_KEYS)
            cfg.grid.append((section[5:], values))
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")
    return cfg


def build_experiment(
    values: dict[str, Any], geometry: DramGeometry, timing: TimingParams
) -> ExperimentConfig:
    """Turn experiment key/values (strings or parsed) into an ExperimentConfig."""
    mode = Mode.parse(values.get("mode", "navigate"))
    attackers = values.get("attackers")
    if attackers is None or attackers == "":
        attackers = 0 if mode is Mode.VICTIM_ONLY else 1
    iterations = values.get("iterations")
    try:
        op = Op(str(values.get("op", "write")).strip().lower())
    except ValueError:
        raise ConfigError(f"op: expected read or write, got {values.get('op')!r}") from None
    cfg = ExperimentConfig(
        mode=mode,
        benchmark_bytes=parse_size(values.get("benchmark", "1K")),
        workload_bytes=parse_size(values.get("workload", "256K")),
        attackers=_parse_int("attackers", attackers),
        repetitions=_parse_int("repetitions", values.get("repetitions", 100)),
        policy=Policy.parse(values.get("policy", "fcfs")),
        timing=timing,
        seed=_parse_int("seed", values.get("seed", 0)),
        op=op,
        geometry=geometry,
        iterations=None if iterations in (None, "") else _parse_int("iterations", iterations),
        tie_noise=_parse_bool("tie_noise", values.get("tie_noise", False)),
    )
    return cfg


def _timing_from(values: dict[str, str], args: argparse.Namespace | None) -> TimingParams:
    kwargs = {k: _parse_int(k, v) for k, v in values.items()}
    if args is not None and getattr(args, "timing", None):
        kwargs.update(_int_list(args.timing, ("cas_cycles", "rcd_cycles", "rp_cycles"), "--timing"))
    if args is not None and getattr(args, "refresh", None):
        kwargs.update(_int_list(args.refresh, ("refresh_interval_cycles", "refresh_duration_cycles"),
                                "--refresh"))
    return TimingParams(**kwargs)


def _flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    mapping = {"mode": args.mode, "benchmark": args.benchmark, "workload": args.workload,
               "attackers": args.attackers, "repetitions": args.reps, "policy": args.policy,
               "seed": args.seed, "op": args.op, "iterations": args.iterations}
    out = {k: v for k, v in mapping.items() if v is not None}
    if args.tie_noise:
        out["tie_noise"] = True
    return out


def _load(args: argparse.Namespace) -> CliConfig:
    return load_config(args.config) if getattr(args, "config", None) else CliConfig()


def _out_dir(args: argparse.Namespace, file_cfg: CliConfig) -> Path:
    return Path(args.out or file_cfg.output.get("dir") or "results")


def _series_name(run_id: str, taken: set[str], index: int) -> str:
    name = f"series_{run_id}.csv"
    if name in taken:
        name = f"series_{run_id}_p{index}.csv"
    taken.add(name)
    return name


def print_summary_table(summaries: Sequence[RunSummary], out=None) -> None:
    out = out or sys.stdout
    cols = ("run_id", "victim_iterations", "victim_total_cycles", "victim_mean_cycles",
            "victim_max_cycles", "victim_p99_cycles", "conflict_count", "hit_count", "open_count")
    rows = [[s.row()[c] for c in cols] for s in summaries]
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)), file=out)
    for r in rows:
        print("  ".join(v.rjust(w) for v, w in zip(r, widths)), file=out)


def cmd_run(args: argparse.Namespace) -> int:
    file_cfg = _load(args)
    geometry = DramGeometry.from_mapping(file_cfg.geometry)
    timing = _timing_from(file_cfg.timing, args)
    values = {**file_cfg.experiment, **_flag_overrides(args)}
    cfg = build_experiment(values, geometry, timing)
    summary = run_experiment(cfg)
    out = _out_dir(args, file_cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(out / "summary.csv", [summary])
    write_series_csv(out / _series_name(summary.run_id, set(), 0), summary)
    print_summary_table([summary])
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    file_cfg = _load(args)
    geometry = DramGeometry.from_mapping(file_cfg.geometry)
    timing = _timing_from(file_cfg.timing, args)
    base = {**file_cfg.experiment, **_flag_overrides(args)}
    points: list[tuple[str, ExperimentConfig | None, str | None]] = []
    if args.navigate_grid:
        reps = _parse_int("repetitions", base.get("repetitions", 100))
        for cfg in navigate_grid(repetitions=reps, attackers=_parse_int("attackers", base.get("attackers", 1)),
                              timing=timing, geometry=geometry, seed=_parse_int("seed", base.get("seed", 0)),
                              policy=Policy.parse(base.get("policy", "fcfs")),
                              mode=Mode.parse(base.get("mode", "navigate")),
                              op=build_experiment(base, geometry, timing).op):
            points.append((cfg.run_id, cfg, None))
    for name, values in file_cfg.grid:
        try:
            points.append((name, build_experiment({**base, **values}, geometry, timing), None))
        except ConfigError as exc:
            points.append((name, None, str(exc)))
    if not points:
        raise ConfigError("grid: no [grid.<name>] sections in the config (or pass --navigate-grid)")

    runnable = [cfg for _, cfg, _ in points if cfg is not None]
    results = iter(sweep(runnable, workers=args.workers) if runnable else [])
    out = _out_dir(args, file_cfg)
    out.mkdir(parents=True, exist_ok=True)
    summaries, taken, failures = [], set(), 0
    for i, (name, cfg, error) in enumerate(points):
        if cfg is not None:
            point = next(results)
            error = point.error
        label = f"[{i + 1}/{len(points)}] {name}"
        if error is not None:
            failures += 1
            print(f"{label} ERROR {error}")
            continue
        summary = point.summary
        summaries.append(summary)
        write_series_csv(out / _series_name(summary.run_id, taken, i), summary)
        print(f"{label} ok victim_total_cycles={summary.row()['victim_total_cycles']}")
    write_summary_csv(out / "summary.csv", summaries)
    if summaries:
        print_summary_table(summaries)
    return 0 if summaries else EXIT_CONFIG


def cmd_compare(args: argparse.Namespace) -> int:
    navigate = read_summary_csv(args.navigate)
    bomb = read_summary_csv(args.bomb)
    if not navigate:
        raise ConfigError(f"{args.navigate}: no rows")

    def factors(s: RunSummary):
        return (s.benchmark_bytes, s.workload_bytes, s.attackers, s.op, s.policy)

    by_factor = {factors(s): s for s in bomb}
    reports = []
    for nav in navigate:
        match = by_factor.get(factors(nav))
        if match is None:
            raise ComparisonError(
                f"no bomb row matches navigate row {nav.run_id} "
                f"(benchmark {nav.benchmark_bytes}, workload {nav.workload_bytes}, attackers {nav.attackers})"
            )
        reports.append(compare_modes(nav, match))
    print(REPORT_HEADER)
    for r in sorted(reports, key=lambda r: (r.workload_bytes, r.benchmark_bytes, r.attackers)):
        print(r.line())
    return 0


def cmd_decompose(args: argparse.Namespace) -> int:
    file_cfg = _load(args)
    values = dict(file_cfg.geometry)
    if args.interleave:
        values["interleave_mode"] = args.interleave
    geometry = DramGeometry.from_mapping(values)
    check_mapping(geometry)
    for text in args.offset:
        offset = parse_size(text)
        try:
            print(decompose(geometry, offset).csv(offset))
        except IndexError as exc:
            raise ConfigError(str(exc)) from None
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_help(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file with [geometry], [timing], [experiment], [grid.*], [output]")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--benchmark", help="burst size per iteration, e.g. 1K, 4K, 8K, 16K")
    p.add_argument("--workload", help="block size, e.g. 256K, 512K, 1M, 2M, 4M")
    p.add_argument("--attackers", type=int)
    p.add_argument("--reps", type=int, help="repetitions per point (default 100)")
    p.add_argument("--policy", choices=[p.value for p in Policy])
    p.add_argument("--timing", metavar="CL,RCD,RP")
    p.add_argument("--refresh", metavar="INTERVAL,DURATION")
    p.add_argument("--seed", type=int)
    p.add_argument("--op", choices=[o.value for o in Op])
    p.add_argument("--iterations", type=int, help="override per-actor iteration count")
    p.add_argument("--tie-noise", action="store_true", help="seeded random tie-breaking in arbitration")
    p.add_argument("--out", help="output directory (default results)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="rowbomb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    p = subs["run"] = sub.add_parser("run", help="run one experiment point")
    _experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = subs["sweep"] = sub.add_parser("sweep", help="run every [grid.*] point of a config")
    _experiment_flags(p)
    p.add_argument("--navigate-grid", action="store_true", help="add the eight benchmark/workload points")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = subs["compare"] = sub.add_parser("compare", help="navigate vs bomb slowdown table")
    p.add_argument("navigate", help="summary CSV of navigate runs")
    p.add_argument("bomb", help="summary CSV of bomb runs")
    p.set_defaults(func=cmd_compare)

    p = subs["decompose"] = sub.add_parser("decompose", help="print offset,chip,bank_group,bank,flat_bank,row,column")
    p.add_argument("offset", nargs="+", help="byte offset, suffixes allowed (128K)")
    p.add_argument("--config")
    p.add_argument("--interleave", choices=["high", "low"])
    p.set_defaults(func=cmd_decompose)
    return parser, subs


def main(argv: Sequence[str] | None = None) -> int:
    parser, subs = build_parser()
    args, extras = parser.parse_known_args(argv)
    if extras:
        target = subs.get(args.command, parser)
        target.print_help(sys.stderr)
        print(f"{target.prog}: error: unrecognized arguments: {' '.join(extras)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
