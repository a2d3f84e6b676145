"""Conformal vs uncalibrated techniques: calibration curves and areas.

Runs the paired config, writes the report (calibration_curves.svg,
calibration_comparison.csv) and prints how often CP had the smaller
miscalibration area.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from trafficuq.bench import emit_report, load_config, run_benchmark

HERE = Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE.parent / "configs" / "rq3_calibration.json")
    ap.add_argument("--days", type=int)
    ap.add_argument("--repeats", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/rq3")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.days:
        cfg = cfg.replace(data=replace(cfg.data, days=args.days))
    if args.repeats:
        cfg = cfg.replace(repeats=args.repeats)
    manifest = run_benchmark(cfg, args.out, jobs=args.jobs)
    report = Path(args.out) / "report"
    emit_report(manifest, report)

    with (report / "calibration_comparison.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            print(f"CP-{row['model']} vs {row['other_method']}: CP smaller area in "
                  f"{row['cp_smaller_area']}/{row['n_pairs']} "
                  f"(mean {float(row['cp_mean_area']):.3f} vs {float(row['other_mean_area']):.3f})")
    print(f"curves: {report / 'calibration_curves.svg'}")
    return 2 if manifest.n_failed else 0


if __name__ == "__main__":
    sys.exit(main())
