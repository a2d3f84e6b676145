"""CP-RFR across feature sets and forecasting horizons.

For each sensor and window size prints R2 and MIL per (meteo, calendar)
feature set along h = 1, 2, 4, 8, and flags any horizon sweep where MIL
fails to grow.
"""

import argparse
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

from trafficuq.bench import emit_report, load_config, run_benchmark

HERE = Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE.parent / "configs" / "rq2_features_horizons.json")
    ap.add_argument("--days", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/rq2")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.days:
        cfg = cfg.replace(data=replace(cfg.data, days=args.days))
    manifest = run_benchmark(cfg, args.out, jobs=args.jobs)
    emit_report(manifest)

    sweeps = defaultdict(dict)
    for e in manifest.entries:
        if e["status"] == "ok":
            key = (e["sensor"], e["omega"], e["meteo"], e["calendar"])
            sweeps[key][e["horizon"]] = e["metrics"]
    flagged = 0
    for (sensor, omega, m, c), by_h in sorted(sweeps.items()):
        hs = sorted(by_h)
        mils = [by_h[h]["mil"] for h in hs]
        grows = all(a < b for a, b in zip(mils, mils[1:]))
        flagged += not grows
        cells = "  ".join(f"h{h}: R2 {by_h[h]['r2']:.3f} MIL {by_h[h]['mil']:7.1f}" for h in hs)
        print(f"{sensor} w{omega} m{int(m)}c{int(c)}  {cells}{'' if grows else '  <- MIL not increasing'}")
    print(f"{flagged} sweep(s) without strictly increasing MIL")
    return 2 if manifest.n_failed else 0


if __name__ == "__main__":
    sys.exit(main())
