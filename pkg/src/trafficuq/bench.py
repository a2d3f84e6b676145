"""Scenario-grid benchmark: enumerate, fit, calibrate, score and report.

A run is driven by a JSON config. Scenarios that share a dataset and a model
(e.g. conformal and ensemble intervals around the same forest) share one fit.
Every fit is seeded from a hash of its scenario key, so results do not depend
on execution order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
import warnings
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DatasetConfig, SensorSeries, build_windows, fit_standardizer, load_calendar,
                   load_csv, stratified_monthly_split)
from .errors import ConfigError, LeakageError, TrafficUQError
from .metrics import DEFAULT_ALPHA_GRID, calibration_curve, evaluate
from .neural import MLPConfig, fit_mlp
from .plots import box_plot, interval_band_plot, line_plot
from .regressors import (EnsembleModel, LossSpec, TreeConfig, fit_adaboost_r2, fit_extra_trees,
                         fit_gradient_boosting, fit_random_forest, load_model, save_model)
from .synthetic import SyntheticConfig, generate_synthetic, load_synthetic_config
from .uncertainty import (ConformalMethod, Destandardized, EnsembleMethod, HeteroscedasticMethod,
                          MCDropoutMethod, QuantileMethod)

log = logging.getLogger(__name__)

MODEL_ALIASES = {"RFR": "random_forest", "ETR": "extra_trees", "GBR": "gradient_boosting",
                 "ABR": "adaboost_r2", "MLP": "mlp"}
UQ_ALIASES = {"CP": "conformal", "E": "ensemble", "QR": "quantile", "MCD": "mc_dropout",
              "HR": "heteroscedastic"}
MODEL_SHORT = {v: k for k, v in MODEL_ALIASES.items()}
UQ_SHORT = {v: k for k, v in UQ_ALIASES.items()}

APPLICABILITY = {
    "random_forest": ("conformal", "ensemble"),
    "extra_trees": ("conformal", "ensemble"),
    "gradient_boosting": ("conformal", "quantile"),
    "adaboost_r2": ("conformal", "ensemble"),
    "mlp": ("conformal", "mc_dropout", "heteroscedastic"),
}

FEATURE_SET_ORDER = ((True, True), (False, True), (True, False), (False, False))
METRIC_COLUMNS = ("r2", "icp", "mil", "rmil", "miscalibration_area", "T", "crossings")
SCENARIO_COLUMNS = ("scenario_id", "sensor", "omega", "horizon", "meteo", "calendar", "model", "uq",
                    "alpha", "seed", "repeat")


def canonical_model(name: str) -> str:
    key = MODEL_ALIASES.get(str(name).upper(), str(name).lower())
    if key not in APPLICABILITY:
        raise ConfigError(f"unknown model {name!r}")
    return key


def canonical_uq(name: str) -> str:
    key = UQ_ALIASES.get(str(name).upper(), str(name).lower())
    if key not in UQ_SHORT:
        raise ConfigError(f"unknown uncertainty method {name!r}")
    return key


def method_label(model: str, uq: str) -> str:
    return f"{UQ_SHORT[uq]}-{MODEL_SHORT[model]}"


def derive_seed(base: int, *parts) -> int:
    """32-bit seed from ``base`` and the CRC32 of the joined key parts."""
    key = zlib.crc32("|".join(str(p) for p in parts).encode("utf-8"))
    return int(np.random.SeedSequence([int(base), key]).generate_state(1)[0])


@dataclass(frozen=True)
class DataSource:
    source: str = "synthetic"
    days: int = 365
    paths: dict = field(default_factory=dict)
    holidays: str | None = None
    school: str | None = None

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data source must be 'synthetic' or 'csv', got {self.source!r}")
        if int(self.days) != self.days or self.days < 1:
            raise ConfigError("days must be a positive integer")


@dataclass(frozen=True)
class ModelParams:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    gb_learning_rate: float = 0.1
    gb_max_depth: int = 3
    ab_learning_rate: float = 0.1
    ab_max_depth: int = 3
    mlp_hidden: tuple = (50,)
    mlp_epochs: int = 20
    mlp_batch_size: int = 32
    mlp_learning_rate: float = 1e-3
    dropout_rate: float = 0.2
    mc_passes: int = 100

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if self.n_estimators < 2:
            raise ConfigError("n_estimators must be >= 2")
        if self.mc_passes < 10:
            raise ConfigError("mc_passes must be >= 10")


@dataclass(frozen=True)
class BenchConfig:
    sensors: tuple = ("synthetic",)
    omegas: tuple = (5,)
    horizons: tuple = (1,)
    meteo: tuple = (True,)
    calendar: tuple = (True,)
    models: tuple = ("random_forest",)
    uq_methods: tuple = ("conformal",)
    pairs: tuple | None = None
    alpha: float = 0.1
    seed: int = 0
    repeats: int = 1
    data: DataSource = field(default_factory=DataSource)
    profile: SyntheticConfig = field(default_factory=SyntheticConfig)
    params: ModelParams = field(default_factory=ModelParams)
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    dump_intervals: bool = True
    model_cache: str | None = None

    def __post_init__(self):
        for name in ("sensors", "omegas", "horizons", "meteo", "calendar", "models", "uq_methods", "alpha_grid"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float, bool)):
                value = (value,)
            value = tuple(value)
            if not value:
                raise ConfigError(f"axis {name!r} is empty")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "sensors", tuple(str(s) for s in self.sensors))
        object.__setattr__(self, "meteo", tuple(bool(v) for v in self.meteo))
        object.__setattr__(self, "calendar", tuple(bool(v) for v in self.calendar))
        object.__setattr__(self, "models", tuple(canonical_model(m) for m in self.models))
        object.__setattr__(self, "uq_methods", tuple(canonical_uq(u) for u in self.uq_methods))
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple((canonical_model(m), canonical_uq(u)) for m, u in self.pairs))
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise ConfigError("repeats must be a positive integer")
        for w in self.omegas:
            DatasetConfig(window=w)
        for h in self.horizons:
            DatasetConfig(horizon=h)
        if any(not 0 < a < 1 for a in self.alpha_grid):
            raise ConfigError("alpha_grid values must lie in (0, 1)")
        if self.data.source == "csv":
            missing = [s for s in self.sensors if s not in self.data.paths]
            if missing:
                raise ConfigError(f"no CSV path configured for sensors {missing}")

    def replace(self, **changes) -> "BenchConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pairs"] = None if self.pairs is None else [list(p) for p in self.pairs]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_TOP_KEYS = {f.name for f in dataclasses.fields(BenchConfig)} - {"params"} | {"model_params", "profile_file"}


def config_from_dict(raw: dict, base_dir=None) -> BenchConfig:
    """Build a :class:`BenchConfig`; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    def resolve(p):
        return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else str(p)

    kw = {k: v for k, v in raw.items() if k not in ("data", "profile", "model_params", "profile_file")}
    data = dict(raw.get("data", {}))
    try:
        unknown = set(data) - {f.name for f in dataclasses.fields(DataSource)}
        if unknown:
            raise ConfigError(f"unknown data keys: {sorted(unknown)}")
        data["paths"] = {str(k): resolve(v) for k, v in data.get("paths", {}).items()}
        for k in ("holidays", "school"):
            data[k] = resolve(data.get(k))
        kw["data"] = DataSource(**data)
        profile = load_synthetic_config(resolve(raw["profile_file"])) if raw.get("profile_file") else SyntheticConfig()
        if raw.get("profile"):
            profile = profile.replace(**raw["profile"])
        kw["profile"] = profile
        params = raw.get("model_params", {})
        unknown = set(params) - {f.name for f in dataclasses.fields(ModelParams)}
        if unknown:
            raise ConfigError(f"unknown model_params keys: {sorted(unknown)}")
        kw["params"] = ModelParams(**params)
        if kw.get("model_cache"):
            kw["model_cache"] = resolve(kw["model_cache"])
        return BenchConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> BenchConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw, base_dir=path.parent)


@dataclass(frozen=True)
class Scenario:
    sensor: str
    omega: int
    horizon: int
    meteo: bool
    calendar: bool
    model: str
    uq: str
    alpha: float
    seed: int
    repeat: int = 0

    def __post_init__(self):
        if self.uq not in APPLICABILITY.get(self.model, ()):
            raise ConfigError(f"illegal (model, uq) pair ({self.model}, {self.uq})")

    @property
    def scenario_id(self) -> str:
        return (f"{self.sensor}_w{self.omega}_h{self.horizon}_m{int(self.meteo)}c{int(self.calendar)}_"
                f"{method_label(self.model, self.uq)}_r{self.repeat}")

    @property
    def group_key(self) -> tuple:
        return (self.sensor, self.omega, self.horizon, self.meteo, self.calendar, self.model, self.repeat)

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(window=self.omega, horizon=self.horizon, use_meteo=self.meteo,
                             use_calendar=self.calendar, alpha=self.alpha)


def enumerate_scenarios(config: BenchConfig) -> list[Scenario]:
    """Cartesian product of the axes, restricted to legal (model, uq) pairs.

    Explicit ``pairs`` must all be legal; otherwise the product of ``models``
    and ``uq_methods`` is filtered silently.
    """
    if config.pairs is not None:
        for m, u in config.pairs:
            if u not in APPLICABILITY[m]:
                raise ConfigError(f"illegal (model, uq) pair ({MODEL_SHORT[m]}, {UQ_SHORT[u]})")
        pairs = list(dict.fromkeys(config.pairs))
    else:
        pairs = [(m, u) for m in config.models for u in config.uq_methods if u in APPLICABILITY[m]]
        if not pairs:
            raise ConfigError("no legal (model, uq) pair in the configured axes")
    out = []
    for sensor in config.sensors:
        for w in config.omegas:
            for m in config.meteo:
                for c in config.calendar:
                    for h in config.horizons:
                        for model, uq in pairs:
                            for r in range(config.repeats):
                                seed = derive_seed(config.seed, "fit", sensor, w, h, int(m), int(c), model, r)
                                out.append(Scenario(sensor, int(w), int(h), m, c, model, uq, config.alpha, seed, r))
    return out


# ---------------------------------------------------------------- execution

_SERIES_CACHE: dict = {}


def load_series(config: BenchConfig, sensor: str) -> SensorSeries:
    key = (config.digest(), sensor)
    if key not in _SERIES_CACHE:
        if config.data.source == "synthetic":
            _SERIES_CACHE[key] = generate_synthetic(config.profile, config.data.days,
                                                    derive_seed(config.seed, "data", sensor), sensor)
        else:
            cal = None
            if config.data.holidays or config.data.school:
                cal = load_calendar(config.data.holidays, config.data.school)
            _SERIES_CACHE[key] = load_csv(config.data.paths[sensor], calendar=cal, sensor_id=sensor)
    return _SERIES_CACHE[key]


class _LeakageGuard:
    """Refuses any fit/calibration row set that touches the test partition."""

    def __init__(self, dataset, splits):
        self.test = np.asarray(splits.test)
        self.test_times = set(dataset.sample_timestamps[self.test].tolist())
        self.times = dataset.sample_timestamps

    def rows(self, idx, purpose: str):
        idx = np.asarray(idx)
        if np.intersect1d(idx, self.test).size or self.test_times.intersection(self.times[idx].tolist()):
            raise LeakageError(f"test rows reached {purpose}")
        return idx


class _StandardizedPredictor:
    def __init__(self, model, standardizer):
        self.model = model
        self.standardizer = standardizer

    def predict(self, X):
        s = self.standardizer
        return s.inverse_y(self.model.predict(s.transform(X)))


def _tree_fit(config: BenchConfig, scenario: Scenario, variant: str, X, y) -> EnsembleModel:
    p = config.params
    seed = scenario.seed
    cache = None
    if config.model_cache:
        digest = hashlib.sha256(json.dumps([dataclasses.asdict(p), variant, scenario.group_key, seed,
                                            config.digest()], default=list).encode()).hexdigest()[:16]
        cache = Path(config.model_cache) / f"{scenario.model}_{variant}_{digest}.npz"
        if cache.exists():
            return load_model(cache)
    if scenario.model == "random_forest":
        model = fit_random_forest(X, y, p.n_estimators, seed,
                                  TreeConfig(max_depth=p.max_depth, min_samples_leaf=p.min_samples_leaf))
    elif scenario.model == "extra_trees":
        model = fit_extra_trees(X, y, p.n_estimators, seed,
                                TreeConfig(max_depth=p.max_depth, min_samples_leaf=p.min_samples_leaf,
                                           split_mode="random-threshold"))
    elif scenario.model == "adaboost_r2":
        model = fit_adaboost_r2(X, y, p.n_estimators, p.ab_learning_rate, p.ab_max_depth, seed)
    else:
        loss = LossSpec() if variant == "squared" else LossSpec("pinball", float(variant))
        model = fit_gradient_boosting(X, y, loss, p.n_estimators, p.gb_learning_rate, p.gb_max_depth, seed)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, cache)
    return model


def _build_method(config, scenario, fits, Xtr, ytr, Xcal, ycal):
    """Fit (or reuse) the model behind ``scenario`` and wrap it in its UQ method."""
    p = config.params

    def fit(variant, fn):
        if variant not in fits:
            fits[variant] = fn()
        return fits[variant]

    if scenario.model != "mlp":
        if scenario.uq == "quantile":
            a = scenario.alpha
            lo = fit(repr(a / 2), lambda: _tree_fit(config, scenario, repr(a / 2), Xtr, ytr))
            mid = fit("0.5", lambda: _tree_fit(config, scenario, "0.5", Xtr, ytr))
            hi = fit(repr(1 - a / 2), lambda: _tree_fit(config, scenario, repr(1 - a / 2), Xtr, ytr))
            return QuantileMethod(lo, mid, hi, a)
        model = fit("squared", lambda: _tree_fit(config, scenario, "squared", Xtr, ytr))
        if scenario.uq == "ensemble":
            return EnsembleMethod(model)
        return ConformalMethod.calibrate(model, Xcal, ycal)

    std = fit("standardizer", lambda: fit_standardizer(Xtr, ytr))
    head = "gaussian" if scenario.uq == "heteroscedastic" else "scalar"
    dropout = 0.0 if head == "gaussian" else p.dropout_rate
    mcfg = MLPConfig(hidden_sizes=p.mlp_hidden, epochs=p.mlp_epochs, learning_rate=p.mlp_learning_rate,
                     batch_size=p.mlp_batch_size, dropout_rate=dropout, output_head=head, seed=scenario.seed)
    net = fit(head, lambda: fit_mlp(std.transform(Xtr), std.transform_y(ytr), mcfg))
    if scenario.uq == "heteroscedastic":
        return Destandardized(HeteroscedasticMethod(net), std)
    if scenario.uq == "mc_dropout":
        return Destandardized(MCDropoutMethod(net, p.mc_passes, derive_seed(scenario.seed, "mc")), std)
    return ConformalMethod.calibrate(_StandardizedPredictor(net, std), Xcal, ycal)


def _failure(scenario, reason, elapsed=0.0):
    return {"scenario": scenario, "status": "failed", "error": reason, "metrics": None,
            "curve": None, "intervals": None, "timing_s": elapsed}


def run_group(config: BenchConfig, scenarios: list[Scenario]) -> list[dict]:
    """Run scenarios sharing one dataset and model; failures are per scenario."""
    first = scenarios[0]
    try:
        series = load_series(config, first.sensor)
        dataset = build_windows(series, config=first.dataset_config())
        splits = stratified_monthly_split(dataset)
        guard = _LeakageGuard(dataset, splits)
        tr = guard.rows(splits.train, "model fitting")
        cal = guard.rows(splits.calibration, "calibration")
    except Exception as exc:  # noqa: BLE001 - isolate, record, continue
        return [_failure(s, f"{type(exc).__name__}: {exc}") for s in scenarios]
    X, y = dataset.X, dataset.y
    Xte, yte = X[splits.test], y[splits.test]
    fits: dict = {}
    out = []
    for s in scenarios:
        t0 = time.perf_counter()
        try:
            method = _build_method(config, s, fits, X[tr], y[tr], X[cal], y[cal])
            iv = method.predict_interval(Xte, s.alpha)
            curve = calibration_curve(method, Xte, yte, config.alpha_grid)
            report = evaluate(iv, yte, curve)
            metrics = dataclasses.asdict(report)
            metrics["crossings"] = iv.crossings
            out.append({
                "scenario": s, "status": "ok", "error": "", "metrics": metrics,
                "curve": (curve.confidence.tolist(), curve.coverage.tolist()),
                "intervals": (dataset.sample_timestamps[splits.test].astype(str).tolist(), yte, iv.point,
                              iv.lower, iv.upper) if config.dump_intervals else None,
                "timing_s": time.perf_counter() - t0,
            })
        except Exception as exc:  # noqa: BLE001
            log.warning("scenario %s failed: %s", s.scenario_id, exc)
            out.append(_failure(s, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0))
    return out


def _run_group_task(args):
    return run_group(*args)


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    alpha: float
    tool_version: str
    entries: list
    elapsed_s: float = 0.0
    run_dir: Path | None = None

    @property
    def n_failed(self) -> int:
        return sum(e["status"] != "ok" for e in self.entries)

    def to_dict(self) -> dict:
        return {"tool_version": self.tool_version, "config_digest": self.config_digest, "seed": self.seed,
                "alpha": self.alpha, "n_scenarios": len(self.entries), "n_failed": self.n_failed,
                "elapsed_s": self.elapsed_s, "scenarios": self.entries}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"manifest not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid manifest ({exc})") from exc
        return cls(raw["config_digest"], raw["seed"], raw["alpha"], raw["tool_version"], raw["scenarios"],
                   raw.get("elapsed_s", 0.0), path.parent)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _scenario_fields(s: Scenario) -> dict:
    return {"scenario_id": s.scenario_id, "sensor": s.sensor, "omega": s.omega, "horizon": s.horizon,
            "meteo": s.meteo, "calendar": s.calendar, "model": s.model, "uq": s.uq, "alpha": s.alpha,
            "seed": s.seed, "repeat": s.repeat}


def run_benchmark(config, out_dir, jobs: int = 1) -> RunManifest:
    """Run every scenario and write ``metrics.csv``, ``intervals.csv``, ``curves/`` and ``manifest.json``."""
    if not isinstance(config, BenchConfig):
        config = load_config(config)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    t0 = time.perf_counter()
    scenarios = enumerate_scenarios(config)
    groups = defaultdict(list)
    for s in scenarios:
        groups[s.group_key].append(s)
    tasks = [(config, g) for g in groups.values()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(jobs, len(tasks)), mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_run_group_task, tasks))
    else:
        results = [_run_group_task(t) for t in tasks]
    by_id = {r["scenario"].scenario_id: r for group in results for r in group}
    ordered = [by_id[s.scenario_id] for s in scenarios]

    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    header = list(SCENARIO_COLUMNS) + ["status"] + list(METRIC_COLUMNS) + ["error"]
    with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in ordered:
            row = _scenario_fields(r["scenario"])
            row["status"] = r["status"]
            row["error"] = r["error"]
            row.update(r["metrics"] or {})
            writer.writerow([_fmt(row.get(k)) for k in header])
    if config.dump_intervals:
        with (out / "intervals.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["timestamp", "y_true", "y_hat", "lower", "upper", "alpha", "method", "scenario_id"])
            for r in ordered:
                if r["intervals"] is None:
                    continue
                s = r["scenario"]
                label = method_label(s.model, s.uq)
                ts, yt, yh, lo, hi = r["intervals"]
                for row in zip(ts, yt.tolist(), yh.tolist(), lo.tolist(), hi.tolist()):
                    writer.writerow([row[0]] + [repr(v) for v in row[1:]] + [repr(s.alpha), label, s.scenario_id])
    entries = []
    for r in ordered:
        s = r["scenario"]
        if r["curve"] is not None:
            with (out / "curves" / f"{s.scenario_id}.csv").open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["confidence", "coverage"])
                for c, v in zip(*r["curve"]):
                    writer.writerow([repr(c), repr(v)])
        entry = _scenario_fields(s)
        entry.update(status=r["status"], error=r["error"], metrics=r["metrics"], timing_s=r["timing_s"])
        entries.append(entry)
    manifest = RunManifest(config.digest(), int(config.seed), config.alpha, __version__, entries,
                           time.perf_counter() - t0, out)
    manifest.save(out / "manifest.json")
    log.info("ran %d scenarios (%d failed) in %.1fs", len(entries), manifest.n_failed, manifest.elapsed_s)
    return manifest


# ------------------------------------------------------------------ reports

class PartialReportWarning(UserWarning):
    pass


def _nanmean(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return sum(vals) / len(vals) if vals else math.nan


def emit_report(manifest, out_dir=None) -> list[Path]:
    """Pivot tables, calibration comparison and SVG plots for a finished run."""
    if not isinstance(manifest, RunManifest):
        manifest = RunManifest.load(manifest)
    if not manifest.entries:
        raise TrafficUQError("manifest has no scenarios")
    ok = [e for e in manifest.entries if e["status"] == "ok"]
    if not ok:
        raise TrafficUQError("manifest has no successful scenarios")
    if len(ok) < len(manifest.entries):
        missing = [e["scenario_id"] for e in manifest.entries if e["status"] != "ok"]
        warnings.warn(f"partial report: {len(missing)} scenario(s) missing, e.g. {missing[:3]}",
                      PartialReportWarning, stacklevel=2)
    run_dir = Path(manifest.run_dir) if manifest.run_dir is not None else Path(".")
    out = Path(out_dir) if out_dir is not None else run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    cells = defaultdict(list)
    for e in ok:
        key = (e["model"], e["uq"], e["omega"], e["sensor"], bool(e["meteo"]), bool(e["calendar"]), e["horizon"])
        cells[key].append(e["metrics"])
    for model, uq, omega in sorted({k[:3] for k in cells}):
        sub = {k[3:]: v for k, v in cells.items() if k[:3] == (model, uq, omega)}
        sensors = list(dict.fromkeys(e["sensor"] for e in manifest.entries))
        horizons = sorted({k[3] for k in sub})
        fsets = [fs for fs in FEATURE_SET_ORDER if any(k[1:3] == fs for k in sub)]
        columns = [(m, c, h) for (m, c) in fsets for h in horizons]
        path = out / f"pivot_{method_label(model, uq)}_w{omega}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sensor", "metric"] + [f"m{int(m)}c{int(c)}_h{h}" for m, c, h in columns])
            for sensor in sensors:
                if not any(k[0] == sensor for k in sub):
                    continue
                for label, key in (("R2", "r2"), ("ICP", "icp"), ("MIL", "mil")):
                    row = [sensor, label]
                    for m, c, h in columns:
                        vals = sub.get((sensor, m, c, h))
                        row.append("" if vals is None else repr(_nanmean(v[key] for v in vals)))
                    writer.writerow(row)
        written.append(path)

    by_method = defaultdict(list)
    for e in ok:
        by_method[(e["model"], e["uq"])].append(e)
    path = out / "calibration_summary.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "calibrated", "n_scenarios", "mean_icp", "mean_mil", "mean_miscalibration_area"])
        for (model, uq), es in sorted(by_method.items()):
            writer.writerow([method_label(model, uq), int(uq == "conformal"), len(es),
                             repr(_nanmean(x["metrics"]["icp"] for x in es)),
                             repr(_nanmean(x["metrics"]["mil"] for x in es)),
                             repr(_nanmean(x["metrics"]["miscalibration_area"] for x in es))])
    written.append(path)

    # conformal vs each uncalibrated method around the same model and dataset
    paired = defaultdict(dict)
    for e in ok:
        paired[(e["sensor"], e["omega"], e["horizon"], e["meteo"], e["calendar"], e["model"], e["repeat"])][e["uq"]] = e
    comp = defaultdict(lambda: [0, 0, [], []])
    for group in paired.values():
        if "conformal" not in group:
            continue
        cp = group["conformal"]["metrics"]
        for uq, e in group.items():
            if uq == "conformal" or math.isnan(e["metrics"]["miscalibration_area"]):
                continue
            c = comp[(e["model"], uq)]
            c[0] += 1
            c[1] += cp["miscalibration_area"] < e["metrics"]["miscalibration_area"]
            c[2].append(cp["miscalibration_area"])
            c[3].append(e["metrics"]["miscalibration_area"])
    path = out / "calibration_comparison.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "other_method", "n_pairs", "cp_smaller_area", "cp_mean_area", "other_mean_area"])
        for (model, uq), (n, wins, a, b) in sorted(comp.items()):
            writer.writerow([MODEL_SHORT[model], method_label(model, uq), n, wins, repr(_nanmean(a)), repr(_nanmean(b))])
    written.append(path)

    groups = [(method_label(m, u), [x["metrics"]["icp"] for x in es]) for (m, u), es in sorted(by_method.items())]
    path = out / "icp_boxplot.svg"
    box_plot(groups, path, title="Interval coverage per method", ylabel="ICP", reference=1 - manifest.alpha)
    written.append(path)

    series = []
    for (model, uq), es in sorted(by_method.items()):
        curves = []
        for e in es:
            cpath = run_dir / "curves" / f"{e['scenario_id']}.csv"
            if cpath.exists():
                with cpath.open(newline="", encoding="utf-8") as fh:
                    rows = list(csv.DictReader(fh))
                curves.append(([float(r["confidence"]) for r in rows], [float(r["coverage"]) for r in rows]))
        if curves and all(c[0] == curves[0][0] for c in curves):
            series.append((method_label(model, uq), curves[0][0], np.mean([c[1] for c in curves], axis=0)))
    if series:
        path = out / "calibration_curves.svg"
        line_plot(series, path, title="Calibration curves", xlabel="expected confidence",
                  ylabel="observed coverage", diagonal=True, xlim=(0, 1), ylim=(0, 1))
        written.append(path)

    ipath = run_dir / "intervals.csv"
    if ipath.exists():
        target = ok[0]["scenario_id"]
        rows = []
        with ipath.open(newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                if r["scenario_id"] == target:
                    rows.append(r)
                elif rows:
                    break
        if rows:
            day = rows[0]["timestamp"][:10]
            rows = [r for r in rows if r["timestamp"][:10] == day]
            x = np.arange(len(rows)) * 0.25
            path = out / "interval_band.svg"
            interval_band_plot(x, [float(r["y_true"]) for r in rows], [float(r["y_hat"]) for r in rows],
                               [float(r["lower"]) for r in rows], [float(r["upper"]) for r in rows], path,
                               title=f"{target} on {day}", xlabel="hour of day", ylabel="vehicles/hour")
            written.append(path)
    return written
