"""Seeded single-trial experiments used by the acceptance suite and ``scripts/``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .bench import BenchConfig, DataSource, ModelParams, enumerate_scenarios, run_group
from .data import DatasetConfig, build_windows, fit_standardizer, stratified_monthly_split
from .metrics import CoverageDriftMonitor
from .neural import MLPConfig, fit_mlp, mc_dropout_samples
from .regressors import LossSpec, fit_gradient_boosting
from .synthetic import SyntheticConfig, expected_level, generate_synthetic, noise_sigma
from .uncertainty import interval_from_samples


def _config(seed, days=365, **axes) -> BenchConfig:
    base = dict(sensors=("synthetic",), omegas=(5,), horizons=(1,), meteo=(False,), calendar=(True,),
                models=("random_forest",), uq_methods=("conformal",), seed=seed, dump_intervals=False,
                data=DataSource(days=days))
    base.update(axes)
    return BenchConfig(**base)


def _run(config: BenchConfig) -> list[dict]:
    out = []
    groups = {}
    for s in enumerate_scenarios(config):
        groups.setdefault(s.group_key, []).append(s)
    for g in groups.values():
        for r in run_group(config, g):
            if r["status"] != "ok":
                raise RuntimeError(f"{r['scenario'].scenario_id}: {r['error']}")
            out.append(r)
    return out


def conformal_coverage_trial(seed: int, alpha: float = 0.1, days: int = 365) -> dict:
    """CP around a random forest on one synthetic year."""
    (r,) = _run(_config(seed, days, alpha=alpha))
    return r["metrics"]


def conformal_vs_ensemble_trial(seed: int, days: int = 365, n_estimators: int = 100, omega: int = 5) -> dict:
    """CP-RFR and E-RFR around the same forest, traffic lags only."""
    cfg = _config(seed, days, omegas=(omega,), calendar=(False,), uq_methods=("conformal", "ensemble"),
                  params=ModelParams(n_estimators=n_estimators))
    return {r["scenario"].uq: r["metrics"] for r in _run(cfg)}


def horizon_sweep(seed: int, horizons=(1, 2, 4, 8), days: int = 365) -> dict:
    """CP-RFR metrics per forecasting horizon."""
    return {r["scenario"].horizon: r["metrics"] for r in _run(_config(seed, days, horizons=tuple(horizons)))}


def _splits(seed, days, window=5, horizon=1, meteo=False, calendar=True, profile=None):
    series = generate_synthetic(profile, days=days, seed=seed)
    ds = build_windows(series, config=DatasetConfig(window=window, horizon=horizon, use_meteo=meteo,
                                                    use_calendar=calendar))
    return series, ds, stratified_monthly_split(ds)


def quantile_gbr_trial(seed: int, tau: float = 0.9, days: int = 365) -> float:
    """Fraction of test targets below a pinball-loss boosting forecast."""
    _, ds, sp = _splits(seed, days)
    model = fit_gradient_boosting(ds.X[sp.train], ds.y[sp.train], LossSpec("pinball", tau), seed=seed)
    return float(np.mean(ds.y[sp.test] <= model.predict(ds.X[sp.test])))


@dataclass(frozen=True)
class SigmaRecovery:
    correlation: float
    predicted: np.ndarray
    true: np.ndarray


def heteroscedastic_recovery(seed: int, days: int = 120, epochs: int = 20) -> SigmaRecovery:
    """Correlate a gaussian-head MLP's sigma with the generator's noise sigma."""
    profile = SyntheticConfig()
    series, ds, sp = _splits(seed, days, meteo=True, profile=profile)
    std = fit_standardizer(ds.X[sp.train], ds.y[sp.train])
    cfg = MLPConfig(epochs=epochs, dropout_rate=0.0, output_head="gaussian", seed=seed)
    net = fit_mlp(std.transform(ds.X[sp.train]), std.transform_y(ds.y[sp.train]), cfg)
    _, sigma = net.predict_gaussian(std.transform(ds.X[sp.test]))
    pos = np.searchsorted(series.timestamps, ds.sample_timestamps[sp.test])
    level = expected_level(series.timestamps[pos], series.weather[pos], series.calendar, profile)
    true = noise_sigma(level, profile)
    pred = sigma * std.y_std
    return SigmaRecovery(float(np.corrcoef(pred, true)[0, 1]), pred, true)


def dropout_width_sweep(seed: int, rates=(0.05, 0.2, 0.5), days: int = 60, n_queries: int = 1000,
                        n_passes: int = 100, alpha: float = 0.1) -> dict:
    """Mean MC-dropout interval width (vehicles/hour) per dropout rate."""
    _, ds, sp = _splits(seed, days)
    std = fit_standardizer(ds.X[sp.train], ds.y[sp.train])
    Xtr, ytr = std.transform(ds.X[sp.train]), std.transform_y(ds.y[sp.train])
    Xq = std.transform(ds.X[sp.test][:n_queries])
    out = {}
    for p in rates:
        net = fit_mlp(Xtr, ytr, MLPConfig(dropout_rate=p, seed=seed))
        iv = interval_from_samples(mc_dropout_samples(net, Xq, n_passes, seed).T, alpha)
        out[p] = float(np.mean(iv.width) * std.y_std)
    return out


def drift_stream(seed: int, n: int = 10_000, alpha: float = 0.1, shift_at: int | None = None,
                 shift: float = 3.0):
    """Standard-normal targets against exact ``1 - alpha`` intervals, optionally mean-shifted."""
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(n)
    if shift_at is not None:
        y[shift_at:] += shift
    z = norm.ppf(1 - alpha / 2)
    return np.full(n, -z), np.full(n, z), y


def drift_trial(seed: int, window: int = 500, kappa: float = 4.0, alpha: float = 0.1,
                shift_at: int | None = None, n: int = 10_000) -> list[int]:
    """Alarm indices of a coverage-drift monitor over one simulated stream."""
    lo, hi, y = drift_stream(seed, n, alpha, shift_at)
    mon = CoverageDriftMonitor(window, alpha, kappa)
    return [ev.index for ev in (mon.update(a, b, c) for a, b, c in zip(lo, hi, y)) if ev is not None]
