"""Seeded coverage study for CP-RFR plus a drift-monitor demonstration.

    python3 scripts/coverage_and_drift.py --seeds 20
"""

import argparse

import numpy as np

from trafficuq.experiments import conformal_coverage_trial, drift_trial


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--days", type=int, default=365)
    ap.add_argument("--window", type=int, default=500)
    ap.add_argument("--kappa", type=float, default=4.0)
    args = ap.parse_args(argv)

    icps = []
    for seed in range(args.seeds):
        m = conformal_coverage_trial(seed, args.alpha, args.days)
        icps.append(m["icp"])
        print(f"seed {seed:2d}: ICP {m['icp']:.4f}  MIL {m['mil']:.1f}  R2 {m['r2']:.3f}  T {m['T']}")
    icps = np.array(icps)
    print(f"ICP mean {icps.mean():.4f} sd {icps.std(ddof=1) if len(icps) > 1 else 0:.4f} "
          f"(nominal {1 - args.alpha:.2f})")

    for label, shift_at in (("stationary", None), ("shift at 5000", 5000)):
        alarms = drift_trial(0, args.window, args.kappa, args.alpha, shift_at=shift_at)
        print(f"drift monitor, {label}: alarms at {alarms if alarms else 'none'}")


if __name__ == "__main__":
    main()
