"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one ``[PASS]/[FAIL] criterion N`` line, repeated in the
terminal summary. Criterion 11 needs a real sensor export and is skipped
unless ``TRAFFICUQ_MADRID_CSV`` points at one.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from trafficuq.experiments import (conformal_coverage_trial, conformal_vs_ensemble_trial, dropout_width_sweep,
                                   drift_trial, heteroscedastic_recovery, horizon_sweep, quantile_gbr_trial)
from trafficuq.metrics import CalibrationCurve, icp, mil, miscalibration_area, r_squared, rmil
from trafficuq.neural import MLPConfig, MLPModel, gradient_check, init_params

pytestmark = pytest.mark.slow


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def _loop_metrics(lo, hi, y, yhat):
    T = len(y)
    width = cover = rel = 0.0
    for i in range(T):
        width += hi[i] - lo[i]
        cover += 1.0 if lo[i] <= y[i] <= hi[i] else 0.0
        rel += (hi[i] - lo[i]) / max(abs(y[i] - yhat[i]), 1e-6)
    mean = 0.0
    for v in y:
        mean += v
    mean /= T
    ss_res = ss_tot = 0.0
    for i in range(T):
        ss_res += (y[i] - yhat[i]) ** 2
        ss_tot += (y[i] - mean) ** 2
    return width / T, cover / T, rel / T, 1.0 - ss_res / ss_tot


def _loop_area(conf, cov):
    area = 0.0
    for i in range(1, len(conf)):
        area += (conf[i] - conf[i - 1]) * (abs(cov[i] - conf[i]) + abs(cov[i - 1] - conf[i - 1])) / 2.0
    return area


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300) if a != b else 0.0


def test_criterion_1_metric_oracles(acceptance):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    with Timer() as t:
        for _ in range(1000):
            T = int(np.exp(rng.uniform(0, np.log(1e4))))
            T = max(T, 2)
            y = rng.normal(500, 300, size=T)
            yhat = y + rng.normal(0, 80, size=T)
            lo = yhat - rng.uniform(0, 300, size=T)
            hi = yhat + rng.uniform(0, 300, size=T)
            got = (mil((lo, hi)), icp((lo, hi), y), rmil((lo, hi), y, yhat), r_squared(y, yhat))
            want = _loop_metrics(lo.tolist(), hi.tolist(), y.tolist(), yhat.tolist())
            conf = np.sort(rng.choice(np.arange(1, 100), size=rng.integers(2, 40), replace=False)) / 100
            cov = rng.uniform(0, 1, size=len(conf))
            got += (miscalibration_area(CalibrationCurve(conf, cov)),)
            want += (_loop_area(conf.tolist(), cov.tolist()),)
            worst = max(worst, *(_rel(a, b) for a, b in zip(got, want)))
    ok = worst <= 1e-12 and t.elapsed < 30
    acceptance(1, ok, f"max relative error {worst:.2e} over 1000 instances in {t.elapsed:.1f}s")
    assert ok


def test_criterion_2_conformal_coverage(acceptance):
    with Timer() as t:
        trials = [conformal_coverage_trial(seed) for seed in range(20)]
    icps = [m["icp"] for m in trials]
    inside = sum(0.87 <= v <= 0.93 for v in icps)
    ok = inside >= 19 and min(m["T"] for m in trials) >= 2000 and t.elapsed < 180
    acceptance(2, ok, f"ICP in [0.87, 0.93] for {inside}/20 seeds (range {min(icps):.3f}-{max(icps):.3f}, "
                      f"T>={min(m['T'] for m in trials)}) in {t.elapsed:.0f}s")
    assert ok


def test_criterion_3_conformal_beats_ensemble(acceptance):
    with Timer() as t:
        trials = [conformal_vs_ensemble_trial(seed) for seed in range(10)]
    area_wins = sum(r["conformal"]["miscalibration_area"] < r["ensemble"]["miscalibration_area"] for r in trials)
    icp_wins = sum(r["ensemble"]["icp"] < r["conformal"]["icp"] for r in trials)
    ok = area_wins >= 9 and icp_wins >= 8 and t.elapsed < 300
    e_icp = np.mean([r["ensemble"]["icp"] for r in trials])
    acceptance(3, ok, f"smaller CP area in {area_wins}/10, lower E ICP in {icp_wins}/10 "
                      f"(mean E ICP {e_icp:.3f}) in {t.elapsed:.0f}s")
    assert ok


def test_criterion_4_horizon_degradation(acceptance):
    hs = (1, 2, 4, 8)
    bad = []
    with Timer() as t:
        for seed in range(5):
            res = horizon_sweep(seed, hs)
            mils = [res[h]["mil"] for h in hs]
            r2s = [res[h]["r2"] for h in hs]
            if not (all(a < b for a, b in zip(mils, mils[1:])) and all(a > b for a, b in zip(r2s, r2s[1:]))):
                bad.append(seed)
    ok = not bad and t.elapsed < 300
    acceptance(4, ok, f"MIL up / R2 down over h=1,2,4,8 for {5 - len(bad)}/5 seeds in {t.elapsed:.0f}s")
    assert ok


def test_criterion_5_quantile_gbr(acceptance):
    with Timer() as t:
        fracs = [quantile_gbr_trial(seed, 0.9) for seed in range(3)]
    ok = all(0.87 <= f <= 0.93 for f in fracs) and t.elapsed < 120
    acceptance(5, ok, f"fraction below tau=0.9 forecast {', '.join(f'{f:.3f}' for f in fracs)} in {t.elapsed:.0f}s")
    assert ok


def test_criterion_6_gradient_checks(acceptance):
    worst = {}
    with Timer() as t:
        for loss, head in (("mse", "scalar"), ("nll", "gaussian")):
            worst[loss] = 0.0
            for seed in range(5):
                rng = np.random.default_rng(seed)
                cfg = MLPConfig(hidden_sizes=(16,), output_head=head)
                params = [p + rng.normal(0, 0.2, size=p.shape) for p in init_params(6, cfg, rng)]
                X, y = rng.normal(size=(8, 6)), rng.normal(size=8)
                worst[loss] = max(worst[loss], gradient_check(MLPModel(params, cfg), X, y, loss))
    ok = max(worst.values()) < 1e-4 and t.elapsed < 10
    acceptance(6, ok, f"max relative gradient error MSE {worst['mse']:.1e}, NLL {worst['nll']:.1e} "
                      f"in {t.elapsed:.1f}s")
    assert ok


def test_criterion_7_heteroscedastic_sigma(acceptance):
    with Timer() as t:
        res = heteroscedastic_recovery(0)
    ok = res.correlation >= 0.7 and t.elapsed < 120
    acceptance(7, ok, f"corr(predicted sigma, true sigma) = {res.correlation:.3f} over {len(res.true)} rows "
                      f"in {t.elapsed:.1f}s")
    assert ok


def test_criterion_8_dropout_width(acceptance):
    rates = (0.05, 0.2, 0.5)
    sweeps = []
    with Timer() as t:
        for seed in range(3):
            sweeps.append(dropout_width_sweep(seed, rates, n_queries=1000))
    mono = [all(s[a] <= s[b] for a, b in zip(rates, rates[1:])) for s in sweeps]
    ok = all(mono) and t.elapsed < 120
    detail = "; ".join("/".join(f"{s[p]:.0f}" for p in rates) for s in sweeps)
    acceptance(8, ok, f"mean widths at p=0.05/0.2/0.5: {detail} ({sum(mono)}/3 seeds monotone) in {t.elapsed:.0f}s")
    assert ok


def test_criterion_9_drift_monitor(acceptance):
    W, shift_at = 500, 5000
    with Timer() as t:
        false_alarms = sum(len(drift_trial(seed, W, 4.0)) for seed in range(10))
        delays = []
        for seed in range(10):
            alarms = [a for a in drift_trial(100 + seed, W, 4.0, shift_at=shift_at) if a >= shift_at]
            delays.append(alarms[0] - shift_at if alarms else math.inf)
    ok = false_alarms == 0 and max(delays) <= 2 * W and t.elapsed < 60
    acceptance(9, ok, f"{false_alarms} false alarms on 10 stationary streams, worst detection delay "
                      f"{max(delays)} samples (limit {2 * W}) in {t.elapsed:.1f}s")
    assert ok


BENCH_CONFIG = """{
  "sensors": ["s1", "s2"], "omegas": [1, 5], "horizons": [1, 4], "meteo": [true], "calendar": [true],
  "pairs": [["RFR", "CP"], ["RFR", "E"], ["GBR", "QR"], ["MLP", "MCD"], ["MLP", "HR"]],
  "data": {"days": 60},
  "model_params": {"n_estimators": 20, "mlp_epochs": 3, "mc_passes": 30}
}"""


def test_criterion_10_determinism(acceptance, tmp_path):
    cfg = tmp_path / "bench.json"
    cfg.write_text(BENCH_CONFIG)
    outs = []
    with Timer() as t:
        for name, jobs in (("a", 1), ("b", 1), ("c", 4), ("d", 4)):
            out = tmp_path / name
            proc = subprocess.run([sys.executable, "-m", "trafficuq", "run", "--config", str(cfg), "--seed", "17",
                                   "--jobs", str(jobs), "--out", str(out)], capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append((out / "metrics.csv").read_bytes())
    same = all(o == outs[0] for o in outs)
    ok = same and t.elapsed < 300
    n = outs[0].count(b"\n") - 1
    acceptance(10, ok, f"metrics.csv ({n} scenarios) bitwise identical across 2 serial and 2 --jobs 4 runs: {same} "
                       f"in {t.elapsed:.0f}s")
    assert ok


def test_criterion_11_real_sensor(acceptance, tmp_path):
    from trafficuq.bench import BenchConfig, DataSource, run_benchmark
    path = os.environ.get("TRAFFICUQ_MADRID_CSV")
    if not path:
        acceptance(11, None, "no real sensor export (set TRAFFICUQ_MADRID_CSV)")
        pytest.skip("set TRAFFICUQ_MADRID_CSV to a real sensor export")
    cfg = BenchConfig(sensors=("real",), omegas=(5,), horizons=(1, 2, 4, 8), meteo=(False,), calendar=(False,),
                      data=DataSource(source="csv", paths={"real": path}), dump_intervals=False)
    manifest = run_benchmark(cfg, tmp_path)
    icps = {e["horizon"]: e["metrics"]["icp"] for e in manifest.entries if e["status"] == "ok"}
    ok = len(icps) == 4 and all(abs(v - 0.90) <= 0.02 for v in icps.values())
    acceptance(11, ok, "CP-RFR ICP per horizon " + ", ".join(f"h={h}: {v:.3f}" for h, v in sorted(icps.items())))
    assert ok
