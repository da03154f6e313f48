"""Command-line harness: calibrate, run, baseline, sweep, report.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Every output lands under ``--out`` with a fixed name so repeated runs with
the same inputs overwrite identical files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .calibration import CalibrationError, CalibrationResult, calibrate, format_table, read_calibration, write_calibration
from .detector import ThresholdDetector
from .gp import GPFitError
from .scenario import KEYS, KEYS_HELP, Scenario, ScenarioError, load_scenario
from .simulator import SimulatedMedium, run_episode

log = logging.getLogger("grains")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

SUMMARY_COLUMNS = ("seed", "triggered", "collision", "stop_index", "stop_x", "stop_y", "zeta", "trigger_z", "trigger_force", "n_samples")
STATS_COLUMNS = (
    "medium",
    "mode",
    "mv_star",
    "t_star",
    "z_bar",
    "threshold",
    "n_episodes",
    "trigger_rate",
    "collision_rate",
    "zeta_q1",
    "zeta_median",
    "zeta_q3",
)
REPORT_COLUMNS = ("medium", "mode", "mv_star", "t_star", "z_bar", "median_zeta", "collision_rate", "source")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list[int]:
    """``"0-4,7,9"`` -> ``[0, 1, 2, 3, 4, 7, 9]``; order kept, duplicates dropped."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep and lo:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed list entry {part!r}") from None
    if not seeds:
        raise UsageError("seed list is empty")
    return list(dict.fromkeys(seeds))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


# -- calibration handling -----------------------------------------------------


def _inline_calibration(args) -> CalibrationResult | None:
    given = {k: getattr(args, k) for k in ("mv", "t_star", "z_bar")}
    if all(v is None for v in given.values()):
        return None
    missing = [f"--{k.replace('_', '-')}" for k, v in given.items() if v is None]
    if missing:
        raise UsageError(f"inline calibration needs --mv, --t-star and --z-bar together; missing {' '.join(missing)}")
    if not 0 < args.mv <= 1 or not args.t_star > 0 or not args.z_bar > 0:
        raise UsageError("inline calibration values must satisfy 0 < mv <= 1, t_star > 0, z_bar > 0")
    return CalibrationResult(args.mv, args.t_star, args.z_bar, ())


def _resolve_calibration(args, scenario: Scenario, out: Path) -> CalibrationResult:
    inline = _inline_calibration(args)
    if inline is not None:
        return CalibrationResult(inline.mv_star, inline.t_star, inline.z_bar, (), z_margin=scenario.calibration.z_margin)
    path = Path(args.calibration) if args.calibration else out / "calibration.csv"
    if not path.exists():
        raise UsageError(f"no calibration found at {path}; run 'grains calibrate' first or pass --mv/--t-star/--z-bar")
    try:
        stored = read_calibration(path)
    except (CalibrationError, KeyError, ValueError) as exc:
        raise UsageError(f"unreadable calibration {path}: {exc}") from None
    return CalibrationResult(stored.mv_star, stored.t_star, stored.z_bar, stored.per_candidate, z_margin=scenario.calibration.z_margin)


def _calibrate(scenario: Scenario) -> CalibrationResult:
    medium = SimulatedMedium(scenario.world, scenario.consts, scenario.start, scenario.end_direction)
    return calibrate(scenario.calibration, medium, seed=scenario.calibration_seed)


# -- episodes -----------------------------------------------------------------


@dataclass
class EpisodeRow:
    seed: int
    triggered: bool
    collision: bool
    stop_index: int | None
    stop_x: float | None
    stop_y: float | None
    zeta: float | None
    trigger_z: float | None
    trigger_force: float | None
    n_samples: int

    def values(self):
        return tuple(getattr(self, c) for c in SUMMARY_COLUMNS)


def run_episodes(scenario: Scenario, seeds: Sequence[int], out: Path | None, cal: CalibrationResult | None, threshold: float | None = None):
    """Run one episode per seed; GP stop rule if ``cal`` is given, else the fixed threshold."""
    rows = []
    for seed in seeds:
        if cal is not None:
            detector = scenario.detector_for(cal)
            spiral = scenario.spiral_for(cal)
        else:
            detector = ThresholdDetector(threshold, scenario.detector.filter_cutoff, scenario.detector.quiescent_samples, record_trace=out is not None)
            spiral = scenario.spiral
        res = run_episode(spiral, scenario.start, scenario.end, scenario.world, scenario.consts, detector, seed=scenario.episode_seed(seed), record_trace=out is not None)
        o = res.outcome
        rows.append(
            EpisodeRow(
                seed,
                o.triggered,
                res.collision,
                o.stop_index,
                o.stop_pos.x if o.stop_pos else None,
                o.stop_pos.y if o.stop_pos else None,
                res.zeta,
                o.trigger_z,
                o.trigger_force,
                res.n_samples,
            )
        )
        if out is not None:
            res.write_trace(out / f"episode_{seed}.csv")
    return rows


def summarize(rows: Sequence[EpisodeRow], scenario_name: str, mode: str, cal: CalibrationResult | None, threshold: float | None):
    zetas = np.array([r.zeta for r in rows if r.zeta is not None], dtype=float)
    q1, med, q3 = np.percentile(zetas, [25, 50, 75]) if zetas.size else (math.nan,) * 3
    n = len(rows)
    return {
        "medium": scenario_name,
        "mode": mode,
        "mv_star": cal.mv_star if cal else math.nan,
        "t_star": cal.t_star if cal else math.nan,
        "z_bar": cal.z_bar if cal else math.nan,
        "threshold": cal.threshold if cal else threshold,
        "n_episodes": n,
        "trigger_rate": sum(r.triggered for r in rows) / n,
        "collision_rate": sum(r.collision for r in rows) / n,
        "zeta_q1": float(q1),
        "zeta_median": float(med),
        "zeta_q3": float(q3),
    }


def _write_summary(out: Path, rows, stats: dict):
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, (r.values() for r in rows))
    _write_csv(out / "summary_stats.csv", STATS_COLUMNS, [[stats[c] for c in STATS_COLUMNS]])


def _print_stats(stats: dict):
    print(
        f"{stats['medium']} [{stats['mode']}] episodes={stats['n_episodes']} trigger_rate={stats['trigger_rate']:.3f} "
        f"collision_rate={stats['collision_rate']:.3f} median_zeta={_fmt(stats['zeta_median']) or '-'}"
    )


# -- subcommands --------------------------------------------------------------


def cmd_calibrate(args) -> int:
    scenario = _load(args)
    result = _calibrate(scenario)
    out = _out_dir(args)
    write_calibration(out / "calibration.csv", result)
    table = format_table(result)
    (out / "calibration.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load(args)
    seeds = parse_seeds(args.seeds)
    out = Path(args.out)
    cal = _resolve_calibration(args, scenario, out)
    out = _out_dir(args)
    rows = run_episodes(scenario, seeds, out, cal)
    stats = summarize(rows, scenario.name, "grains", cal, None)
    _write_summary(out, rows, stats)
    _print_stats(stats)
    return EXIT_OK


def cmd_baseline(args) -> int:
    scenario = _load(args)
    seeds = parse_seeds(args.seeds)
    threshold = scenario.baseline_threshold if args.threshold is None else args.threshold
    if not threshold > 0:
        raise UsageError("--threshold must be positive")
    out = _out_dir(args)
    rows = run_episodes(scenario, seeds, out, None, threshold)
    stats = summarize(rows, scenario.name, "baseline", None, threshold)
    _write_summary(out, rows, stats)
    _print_stats(stats)
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Vary one scenario key; each value gets its own calibration and runs."""
    if args.key not in KEYS or args.key in ("preset", "name"):
        raise UsageError(f"cannot sweep key {args.key!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values is empty")
    seeds = parse_seeds(args.seeds)
    scenarios = [(v, load_scenario(args.scenario, {args.key: v})) for v in values]
    inline = _inline_calibration(args)
    out = _out_dir(args)
    table = []
    for value, scenario in scenarios:
        sub = out / f"{args.key}={value}"
        sub.mkdir(exist_ok=True)
        if inline is None:
            cal = _calibrate(scenario)
            write_calibration(sub / "calibration.csv", cal)
        else:
            cal = CalibrationResult(inline.mv_star, inline.t_star, inline.z_bar, (), z_margin=scenario.calibration.z_margin)
        rows = run_episodes(scenario, seeds, sub, cal)
        stats = summarize(rows, f"{scenario.name} {args.key}={value}", "grains", cal, None)
        _write_summary(sub, rows, stats)
        _print_stats(stats)
        table.append([value, stats["trigger_rate"], stats["collision_rate"], stats["zeta_median"]])
    _write_csv(out / "sweep.csv", (args.key, "trigger_rate", "collision_rate", "zeta_median"), table)
    return EXIT_OK


def _read_stats(path: Path) -> dict:
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise UsageError(f"{path} must hold exactly one row")
    return rows[0]


def cmd_report(args) -> int:
    out = Path(args.out)
    inputs = [Path(p) for p in args.inputs] if args.inputs else [out]
    found = []
    for root in inputs:
        if not root.is_dir():
            raise UsageError(f"input directory {root} does not exist")
        found.extend(sorted(root.rglob("summary_stats.csv")))
    if not found:
        raise UsageError(f"no run outputs (summary_stats.csv) under {', '.join(map(str, inputs))}")

    def num(s: str) -> float:
        return float(s) if s else math.nan

    records = []
    for path in found:
        s = _read_stats(path)
        records.append(
            {
                "medium": s["medium"],
                "mode": s["mode"],
                "mv_star": num(s["mv_star"]),
                "t_star": num(s["t_star"]),
                "z_bar": num(s["z_bar"]),
                "median_zeta": num(s["zeta_median"]),
                "collision_rate": num(s["collision_rate"]),
                "source": str(path.parent),
            }
        )
    # descending median range; runs without any trigger go last
    records.sort(key=lambda r: (math.isnan(r["median_zeta"]), -np.nan_to_num(r["median_zeta"]), r["medium"], r["mode"], r["source"]))
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "report.csv", REPORT_COLUMNS, ([r[c] for c in REPORT_COLUMNS] for r in records))
    for r in records:
        zeta = "-" if math.isnan(r["median_zeta"]) else f"{r['median_zeta'] * 100:.2f} cm"
        print(f"{r['medium']:<24} {r['mode']:<9} median zeta {zeta:>9}  collisions {r['collision_rate']:.2f}")
    return EXIT_OK


# -- plumbing -----------------------------------------------------------------


def _load(args) -> Scenario:
    return load_scenario(args.scenario)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grains", description="Proximity sensing in granular media: calibration, episodes and reports.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log optimizer warnings and progress")
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    def common(sp, seeds: bool):
        sp.add_argument("--scenario", required=True, help="flat key=value scenario file (see 'grains keys')")
        sp.add_argument("--out", required=True, help="output directory")
        if seeds:
            sp.add_argument("--seeds", required=True, help="seed list, e.g. '0-19' or '1,4,9'")

    def inline(sp):
        sp.add_argument("--mv", type=float, help="inline MV* (with --t-star and --z-bar)")
        sp.add_argument("--t-star", type=float, help="inline periodicity T* in samples")
        sp.add_argument("--z-bar", type=float, help="inline z-score threshold")

    sp = sub.add_parser("calibrate", help="sweep MV candidates on object-free runs")
    common(sp, seeds=False)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("run", help="run GP-detector episodes")
    common(sp, seeds=True)
    inline(sp)
    sp.add_argument("--calibration", help="calibration CSV (default: <out>/calibration.csv)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("baseline", help="run fixed-force-threshold episodes")
    common(sp, seeds=True)
    sp.add_argument("--threshold", type=float, help="force threshold in N (default: scenario baseline_threshold, 15)")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("sweep", help="vary one scenario key, calibrating and running each value")
    common(sp, seeds=True)
    inline(sp)
    sp.add_argument("--key", required=True, help="scenario key to vary")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="merge run summaries into report.csv")
    sp.add_argument("--out", required=True, help="output directory (also searched when no inputs are given)")
    sp.add_argument("inputs", nargs="*", help="directories holding run outputs")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("keys", help="list scenario keys")
    sp.set_defaults(func=lambda args: print(KEYS_HELP) or EXIT_OK)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        where = f" (key: {exc.key})" if exc.key else ""
        print(f"grains: config error{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"grains: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibrationError, GPFitError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"grains: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
