"""Command-line entry point: ``generate``, ``build``, ``run``, ``report``, ``monitor``.

Exit status is 0 on success, 1 for configuration or input errors and 2 when
a benchmark finished with failed scenarios.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .bench import RunManifest, emit_report, load_config, run_benchmark
from .data import (DatasetConfig, build_windows, load_calendar, load_csv, save_calendar, save_csv,
                   stratified_monthly_split)
from .errors import TrafficUQError
from .metrics import CoverageDriftMonitor
from .synthetic import SyntheticConfig, generate_synthetic, load_synthetic_config

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _cmd_generate(args) -> int:
    profile = load_synthetic_config(args.config) if args.config else SyntheticConfig()
    series = generate_synthetic(profile, days=args.days, seed=args.seed, sensor_id=args.sensor_id)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(series, out)
    if args.calendar_dir:
        cal_dir = Path(args.calendar_dir)
        cal_dir.mkdir(parents=True, exist_ok=True)
        save_calendar(series.calendar, cal_dir / "holidays.txt", cal_dir / "school.csv")
    print(f"wrote {len(series)} rows to {out}")
    return EXIT_OK


def _cmd_build(args) -> int:
    calendar = None
    if args.holidays or args.school:
        calendar = load_calendar(args.holidays, args.school)
    series = load_csv(args.input, calendar=calendar)
    cfg = DatasetConfig(window=args.window, horizon=args.horizon, use_meteo=args.meteo,
                        use_calendar=args.calendar, alpha=args.alpha)
    ds = build_windows(series, calendar, cfg)
    splits = stratified_monthly_split(ds)
    part = [""] * len(ds)
    for name in ("train", "calibration", "test"):
        for i in getattr(splits, name):
            part[i] = name
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["query_timestamp", "target_timestamp", "split"] + ds.feature_names + ["y"])
        for i in range(len(ds)):
            writer.writerow([str(ds.query_timestamps[i]), str(ds.sample_timestamps[i]), part[i]]
                            + [repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))])
    print(f"wrote {len(ds)} windows ({series.dropped_rows} input rows dropped) to {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if overrides:
        config = config.replace(**overrides)
    manifest = run_benchmark(config, args.out, jobs=args.jobs)
    print(f"{len(manifest.entries)} scenarios, {manifest.n_failed} failed -> {args.out}")
    if args.report:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            emit_report(manifest)
    return EXIT_PARTIAL if manifest.n_failed else EXIT_OK


def _cmd_report(args) -> int:
    manifest = RunManifest.load(args.run_dir)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        files = emit_report(manifest, args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for f in files:
        print(f)
    return EXIT_PARTIAL if caught else EXIT_OK


def _cmd_monitor(args) -> int:
    monitor = CoverageDriftMonitor(args.window, args.alpha, args.kappa)
    events = []
    with open(args.input, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if args.scenario and row["scenario_id"] != args.scenario:
                continue
            ev = monitor.update(float(row["lower"]), float(row["upper"]), float(row["y_true"]))
            if ev is not None:
                events.append({"index": ev.index, "timestamp": row["timestamp"],
                               "miss_rate": ev.miss_rate, "threshold": ev.threshold})
    text = json.dumps(events, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trafficuq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a synthetic sensor series")
    g.add_argument("--config", help="synthetic profile file (key = value lines)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--days", type=int, default=365)
    g.add_argument("--sensor-id", default="synthetic")
    g.add_argument("--out", required=True, help="output CSV")
    g.add_argument("--calendar-dir", help="also write holidays.txt and school.csv here")
    g.set_defaults(func=_cmd_generate)

    b = sub.add_parser("build", help="dump a windowed dataset with its split labels")
    b.add_argument("--input", required=True)
    b.add_argument("--window", type=int, default=5)
    b.add_argument("--horizon", type=int, default=1)
    b.add_argument("--meteo", action="store_true")
    b.add_argument("--calendar", action="store_true")
    b.add_argument("--holidays")
    b.add_argument("--school")
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_build)

    r = sub.add_parser("run", help="run a benchmark grid")
    r.add_argument("--config", required=True, help="benchmark JSON config")
    r.add_argument("--seed", type=int)
    r.add_argument("--alpha", type=float)
    r.add_argument("--repeats", type=int)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", required=True)
    r.add_argument("--report", action="store_true", help="also write the report into <out>/report")
    r.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="pivot tables and plots from a finished run")
    rep.add_argument("run_dir", help="run directory or manifest.json")
    rep.add_argument("--out", help="report directory (default <run_dir>/report)")
    rep.set_defaults(func=_cmd_report)

    m = sub.add_parser("monitor", help="coverage-drift alarms over an interval dump")
    m.add_argument("--input", required=True, help="intervals.csv from a run")
    m.add_argument("--scenario", help="restrict to one scenario_id")
    m.add_argument("--window", type=int, default=500)
    m.add_argument("--alpha", type=float, default=0.1)
    m.add_argument("--kappa", type=float, default=4.0)
    m.add_argument("--out")
    m.set_defaults(func=_cmd_monitor)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrafficUQError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
