"""Compare every (model, technique) pair on the synthetic suite.

Prints mean R2 / ICP / MIL / miscalibration area per method and writes the
full run plus report under --out.

    python3 scripts/rq1_techniques.py --jobs 4 --out runs/rq1
"""

import argparse
import math
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

from trafficuq.bench import emit_report, load_config, method_label, run_benchmark

HERE = Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE.parent / "configs" / "rq1_techniques.json")
    ap.add_argument("--days", type=int, help="override the synthetic length")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/rq1")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.days:
        cfg = cfg.replace(data=replace(cfg.data, days=args.days))
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    manifest = run_benchmark(cfg, args.out, jobs=args.jobs)
    emit_report(manifest)

    acc = defaultdict(lambda: defaultdict(list))
    for e in manifest.entries:
        if e["status"] != "ok":
            continue
        for k in ("r2", "icp", "mil", "miscalibration_area"):
            acc[method_label(e["model"], e["uq"])][k].append(e["metrics"][k])

    def mean(v):
        v = [x for x in v if not math.isnan(x)]
        return sum(v) / len(v) if v else math.nan

    print(f"{'method':<10}{'R2':>8}{'ICP':>8}{'MIL':>10}{'area':>8}")
    for label in sorted(acc):
        m = acc[label]
        print(f"{label:<10}{mean(m['r2']):>8.3f}{mean(m['icp']):>8.3f}{mean(m['mil']):>10.1f}"
              f"{mean(m['miscalibration_area']):>8.3f}")
    print(f"{manifest.n_failed} failed scenario(s); report in {Path(args.out) / 'report'}")
    return 2 if manifest.n_failed else 0


if __name__ == "__main__":
    sys.exit(main())
