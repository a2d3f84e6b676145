import csv
import json
import math

import numpy as np
import pytest

from trafficuq.bench import (APPLICABILITY, BenchConfig, DataSource, ModelParams, PartialReportWarning, RunManifest,
                             Scenario, _LeakageGuard, config_from_dict, derive_seed, emit_report,
                             enumerate_scenarios, load_config, run_benchmark)
from trafficuq.data import DatasetConfig, SensorSeries, build_windows, save_csv, stratified_monthly_split
from trafficuq.errors import ConfigError, LeakageError, TrafficUQError
from trafficuq.synthetic import generate_synthetic

FAST = ModelParams(n_estimators=10, mlp_epochs=2, mc_passes=20)


def small(**kw):
    base = dict(omegas=(5,), horizons=(1,), meteo=(False,), calendar=(True,), data=DataSource(days=60), params=FAST)
    base.update(kw)
    return BenchConfig(**base)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestEnumeration:
    def test_full_grid_is_320(self):
        cfg = BenchConfig(sensors=tuple(f"s{i}" for i in range(10)), omegas=(1, 5), horizons=(1, 2, 4, 8),
                          meteo=(False, True), calendar=(False, True))
        scen = enumerate_scenarios(cfg)
        assert len(scen) == 320 and len({s.scenario_id for s in scen}) == 320

    def test_single_scenario(self):
        (s,) = enumerate_scenarios(small())
        assert s.scenario_id == "synthetic_w5_h1_m0c1_CP-RFR_r0"

    def test_illegal_pair_named(self):
        with pytest.raises(ConfigError, match=r"\(RFR, QR\)"):
            enumerate_scenarios(small(pairs=(("RFR", "QR"),)))

    def test_product_is_filtered_by_applicability(self):
        cfg = small(models=("RFR", "GBR", "MLP"), uq_methods=("CP", "E", "QR", "MCD", "HR"))
        got = {(s.model, s.uq) for s in enumerate_scenarios(cfg)}
        want = {(m, u) for m in ("random_forest", "gradient_boosting", "mlp") for u in APPLICABILITY[m]}
        assert got == want

    def test_stable_order_and_seeds(self):
        cfg = small(horizons=(1, 2), models=("RFR",), uq_methods=("CP", "E"), repeats=2)
        a, b = enumerate_scenarios(cfg), enumerate_scenarios(cfg)
        assert a == b
        assert [s.scenario_id for s in a][:4] == ["synthetic_w5_h1_m0c1_CP-RFR_r0", "synthetic_w5_h1_m0c1_CP-RFR_r1",
                                                  "synthetic_w5_h1_m0c1_E-RFR_r0", "synthetic_w5_h1_m0c1_E-RFR_r1"]
        # CP and E around the same model share its seed
        assert a[0].seed == a[2].seed and a[0].seed != a[1].seed

    def test_scenario_rejects_illegal_pair(self):
        with pytest.raises(ConfigError):
            Scenario("s", 5, 1, False, False, "mlp", "ensemble", 0.1, 0)

    def test_derive_seed_stable(self):
        assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
        assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
        assert 0 <= derive_seed(2**64 - 1, "x") < 2**32


class TestConfig:
    def test_aliases_and_unknown_keys(self, tmp_path):
        cfg = config_from_dict({"models": ["RFR"], "uq_methods": ["CP"], "model_params": {"n_estimators": 5}})
        assert cfg.models == ("random_forest",) and cfg.params.n_estimators == 5
        with pytest.raises(ConfigError):
            config_from_dict({"sensorz": ["a"]})
        with pytest.raises(ConfigError):
            config_from_dict({"models": ["SVR"]})
        with pytest.raises(ConfigError):
            config_from_dict({"alpha": 1.5})

    def test_load_config_resolves_relative_paths(self, tmp_path):
        (tmp_path / "p.cfg").write_text("kappa = 0.01\n")
        (tmp_path / "c.json").write_text(json.dumps({"profile_file": "p.cfg", "data": {"days": 30}}))
        cfg = load_config(tmp_path / "c.json")
        assert cfg.profile.kappa == 0.01 and cfg.data.days == 30
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")

    def test_digest_tracks_content(self):
        assert small().digest() == small().digest()
        assert small().digest() != small(seed=1).digest()


def test_leakage_guard():
    s = generate_synthetic(days=40, seed=0)
    ds = build_windows(s, config=DatasetConfig(window=2, horizon=1))
    sp = stratified_monthly_split(ds)
    guard = _LeakageGuard(ds, sp)
    assert np.array_equal(guard.rows(sp.train, "fit"), sp.train)
    with pytest.raises(LeakageError):
        guard.rows(np.concatenate([sp.train, sp.test[:1]]), "fit")


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    cfg = small(omegas=(1,), horizons=(1, 2), calendar=(False, True),
                models=("RFR", "GBR", "MLP"), uq_methods=("CP", "E", "QR", "MCD", "HR"))
    return cfg, run_benchmark(cfg, out), out


class TestRun:
    def test_outputs(self, suite):
        cfg, manifest, out = suite
        assert manifest.n_failed == 0 and len(manifest.entries) == len(enumerate_scenarios(cfg))
        rows = read_rows(out / "metrics.csv")
        assert [r["scenario_id"] for r in rows] == [s.scenario_id for s in enumerate_scenarios(cfg)]
        for r in rows:
            assert 0 <= float(r["icp"]) <= 1 and float(r["mil"]) >= 0
            assert (out / "curves" / f"{r['scenario_id']}.csv").exists()
        dump = read_rows(out / "intervals.csv")
        assert set(dump[0]) == {"timestamp", "y_true", "y_hat", "lower", "upper", "alpha", "method", "scenario_id"}
        assert all(float(d["lower"]) <= float(d["upper"]) for d in dump[:500])
        back = RunManifest.load(out)
        assert back.config_digest == cfg.digest() and json.dumps(back.entries) == json.dumps(manifest.entries)

    def test_quantile_curve_has_one_level(self, suite):
        _, manifest, out = suite
        qr = [e for e in manifest.entries if e["uq"] == "quantile"]
        assert qr and all(math.isnan(e["metrics"]["miscalibration_area"]) for e in qr)
        assert len(read_rows(out / "curves" / f"{qr[0]['scenario_id']}.csv")) == 1

    def test_rerun_identical(self, suite, tmp_path):
        cfg, _, out = suite
        run_benchmark(cfg, tmp_path)
        assert (tmp_path / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()
        assert (tmp_path / "intervals.csv").read_bytes() == (out / "intervals.csv").read_bytes()

    def test_report(self, suite, tmp_path):
        cfg, manifest, out = suite
        files = {p.name for p in emit_report(manifest, tmp_path)}
        assert {"calibration_summary.csv", "calibration_comparison.csv", "icp_boxplot.svg",
                "calibration_curves.svg", "interval_band.svg"} <= files
        pivot = read_rows(tmp_path / "pivot_CP-RFR_w1.csv")
        assert [(r["sensor"], r["metric"]) for r in pivot] == [("synthetic", "R2"), ("synthetic", "ICP"),
                                                             ("synthetic", "MIL")]
        assert list(pivot[0])[2:] == ["m0c1_h1", "m0c1_h2", "m0c0_h1", "m0c0_h2"]
        comp = {r["other_method"]: r for r in read_rows(tmp_path / "calibration_comparison.csv")}
        assert "E-RFR" in comp and "QR-GBR" not in comp
        assert int(comp["E-RFR"]["cp_smaller_area"]) == int(comp["E-RFR"]["n_pairs"]) == 4
        assert (tmp_path / "icp_boxplot.svg").read_text().startswith("<svg")


def test_failure_isolation_and_partial_report(tmp_path):
    s = generate_synthetic(days=60, seed=1)
    save_csv(SensorSeries(s.sensor_id, s.timestamps, s.flow), tmp_path / "flow.csv")
    cfg = small(meteo=(False, True), calendar=(False,), data=DataSource(source="csv", paths={"synthetic": str(tmp_path / "flow.csv")}))
    manifest = run_benchmark(cfg, tmp_path / "run")
    status = {e["scenario_id"]: (e["status"], e["error"]) for e in manifest.entries}
    assert status["synthetic_w5_h1_m0c0_CP-RFR_r0"][0] == "ok"
    assert status["synthetic_w5_h1_m1c0_CP-RFR_r0"][0] == "failed"
    assert "ConfigError" in status["synthetic_w5_h1_m1c0_CP-RFR_r0"][1]
    assert manifest.n_failed == 1
    with pytest.warns(PartialReportWarning):
        emit_report(tmp_path / "run")


def test_empty_manifest_rejected(tmp_path):
    RunManifest("x", 0, 0.1, "0", [], 0.0, tmp_path).save(tmp_path / "manifest.json")
    with pytest.raises(TrafficUQError):
        emit_report(tmp_path)


def test_synthetic_quantile_gbr_coverage(tmp_path):
    cfg = small(models=("GBR",), uq_methods=("QR",), data=DataSource(days=365), params=ModelParams())
    (e,) = run_benchmark(cfg, tmp_path).entries
    assert 0.85 <= e["metrics"]["icp"] <= 0.95
