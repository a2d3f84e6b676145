import datetime as dt
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trafficuq.data import (CalendarInfo, DatasetConfig, SensorSeries, build_windows, day_of_month,
                            fit_standardizer, load_calendar, load_csv, save_calendar, save_csv,
                            scenario_grid, stratified_monthly_split)
from trafficuq.errors import ConfigError, DataError, SchemaError, SplitError

FIXTURES = Path(__file__).parent / "fixtures"


def _series(flow, start="2019-01-01T00:00", gaps=()):
    n = len(flow)
    steps = np.arange(n, dtype=np.int64)
    for g in gaps:
        steps[g:] += 1
    ts = np.datetime64(start, "s") + steps * np.timedelta64(900, "s")
    return SensorSeries("t", ts, np.asarray(flow, dtype=float))


def _write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_four_valid_rows(self, tmp_path):
        p = _write(tmp_path, "timestamp,flow\n"
                             "2019-01-01T00:00:00,10\n2019-01-01T00:15:00,12\n"
                             "2019-01-01T00:30:00,11.5\n2019-01-01T00:45:00,9\n")
        s = load_csv(p)
        assert len(s) == 4
        assert s.weather is None
        assert s.dropped_rows == 0
        assert s.sensor_id == "s"

    def test_malformed_flow_cell_is_dropped(self, tmp_path):
        p = _write(tmp_path, "timestamp,flow\n"
                             "2019-01-01T00:00:00,10\n2019-01-01T00:15:00,abc\n"
                             "2019-01-01T00:30:00,11.5\n2019-01-01T00:45:00,9\n")
        s = load_csv(p)
        assert len(s) == 3
        assert s.dropped_rows == 1

    def test_weather_fixture(self):
        s = load_csv(FIXTURES / "weather_sample.csv")
        assert len(s) == 5 and s.has_weather
        assert s.weather.shape == (5, 4)
        np.testing.assert_array_equal(s.flow, [812.5, 905.0, 947.25, 880.0, 799.75])
        np.testing.assert_array_equal(s.weather[2], [10.1, 0.5, 0.58, 0.4])
        assert str(s.timestamps[0]) == "2019-03-04T08:00:00"

    def test_round_trip(self, tmp_path, month_series):
        path = tmp_path / "rt.csv"
        save_csv(month_series, path)
        back = load_csv(path, sensor_id=month_series.sensor_id)
        np.testing.assert_array_equal(back.timestamps, month_series.timestamps)
        np.testing.assert_array_equal(back.flow, month_series.flow)
        np.testing.assert_array_equal(back.weather, month_series.weather)

    def test_unsorted_rows_are_sorted(self, tmp_path):
        p = _write(tmp_path, "flow,timestamp\n3,2019-01-01T00:30:00\n1,2019-01-01T00:00:00\n2,2019-01-01T00:15:00\n")
        s = load_csv(p)
        np.testing.assert_array_equal(s.flow, [1, 2, 3])

    def test_missing_flow_column(self, tmp_path):
        p = _write(tmp_path, "timestamp,volume\n2019-01-01T00:00:00,1\n")
        with pytest.raises(SchemaError, match="flow"):
            load_csv(p)

    def test_partial_weather_columns(self, tmp_path):
        p = _write(tmp_path, "timestamp,flow,temperature\n2019-01-01T00:00:00,1,3\n")
        with pytest.raises(SchemaError, match="weather"):
            load_csv(p)

    def test_duplicate_timestamp_named(self, tmp_path):
        p = _write(tmp_path, "timestamp,flow\n2019-01-01T00:00:00,1\n2019-01-01T00:15:00,2\n2019-01-01T00:15:00,3\n")
        with pytest.raises(DataError, match="2019-01-01T00:15:00"):
            load_csv(p)

    def test_negative_flow_dropped(self, tmp_path):
        p = _write(tmp_path, "timestamp,flow\n2019-01-01T00:00:00,1\n2019-01-01T00:15:00,-2\n")
        s = load_csv(p)
        assert len(s) == 1 and s.dropped_rows == 1


class TestSensorSeries:
    def test_off_grid_step_rejected(self):
        ts = np.array(["2019-01-01T00:00", "2019-01-01T00:10"], dtype="datetime64[s]")
        with pytest.raises(DataError):
            SensorSeries("x", ts, [1.0, 2.0])

    def test_negative_flow_rejected(self):
        with pytest.raises(DataError):
            _series([1.0, -1.0])

    def test_arrays_are_read_only(self):
        s = _series([1.0, 2.0])
        with pytest.raises(ValueError):
            s.flow[0] = 5.0


class TestCalendar:
    def test_day_of_week(self):
        cal = CalendarInfo()
        ts = np.array(["2019-01-07T12:00", "2019-01-13T00:00"], dtype="datetime64[s]")
        np.testing.assert_array_equal(cal.features(ts)[:, 0], [0, 6])

    def test_flags(self):
        cal = CalendarInfo({dt.date(2019, 1, 1)}, ((dt.date(2019, 1, 8), dt.date(2019, 1, 10)),))
        ts = np.array(["2019-01-01T08:00", "2019-01-09T08:00", "2019-01-11T08:00"], dtype="datetime64[s]")
        f = cal.features(ts)
        np.testing.assert_array_equal(f[:, 1], [1, 0, 0])
        np.testing.assert_array_equal(f[:, 2], [0, 1, 0])

    def test_file_round_trip(self, tmp_path):
        cal = CalendarInfo({dt.date(2019, 5, 1), dt.date(2019, 12, 25)},
                           ((dt.date(2019, 9, 9), dt.date(2019, 12, 20)),))
        save_calendar(cal, tmp_path / "h.txt", tmp_path / "s.csv")
        assert load_calendar(tmp_path / "h.txt", tmp_path / "s.csv") == cal

    def test_bad_school_line(self, tmp_path):
        p = _write(tmp_path, "2019-01-01\n", "school.csv")
        with pytest.raises(SchemaError):
            load_calendar(school_path=p)


class TestBuildWindows:
    def test_hand_enumerated_rows(self):
        ds = build_windows(_series(np.arange(10.0)), config=DatasetConfig(window=5, horizon=2))
        assert len(ds) == 4
        np.testing.assert_array_equal(ds.X[0], [4, 3, 2, 1, 0])
        assert ds.y[0] == 6
        np.testing.assert_array_equal(ds.y, [6, 7, 8, 9])

    def test_minimal_window(self):
        ds = build_windows(_series([5.0, 6.0, 7.0]), config=DatasetConfig(window=1, horizon=1))
        np.testing.assert_array_equal(ds.X[:, 0], [5, 6])
        np.testing.assert_array_equal(ds.y, [6, 7])

    def test_column_count_with_all_features(self, month_series):
        ds = build_windows(month_series, config=DatasetConfig(window=5, horizon=8, use_meteo=True, use_calendar=True))
        assert ds.X.shape[1] == 12
        assert ds.feature_names[-3:] == ["day_of_week", "is_holiday", "is_school_period"]

    def test_gap_rows_omitted(self):
        s = _series(np.arange(10.0), gaps=(5,))
        ds = build_windows(s, config=DatasetConfig(window=2, horizon=1))
        # rows t=1..3 before the gap, t=6..8 after it
        np.testing.assert_array_equal(ds.y, [2, 3, 4, 7, 8, 9])

    def test_meteo_without_weather(self):
        with pytest.raises(ConfigError):
            build_windows(_series(np.arange(10.0)), config=DatasetConfig(use_meteo=True))

    def test_too_short(self):
        with pytest.raises(DataError):
            build_windows(_series([1.0, 2.0]), config=DatasetConfig(window=2, horizon=1))

    @given(w=st.integers(1, 6), h=st.integers(1, 8), n=st.integers(15, 60),
           gaps=st.lists(st.integers(1, 50), max_size=3, unique=True))
    def test_alignment_property(self, w, h, n, gaps):
        s = _series(np.arange(float(n)), gaps=[g for g in gaps if g < n])
        if n < w + h:
            return
        ds = build_windows(s, config=DatasetConfig(window=w, horizon=h))
        assert ds.X.shape == (len(ds.y), w)
        lag = (ds.sample_timestamps - ds.query_timestamps).astype(np.int64)
        assert np.all(lag == h * 900)
        # lag values are consecutive readings ending at the query instant
        pos = np.searchsorted(s.timestamps, ds.query_timestamps)
        for j in range(w):
            np.testing.assert_array_equal(ds.X[:, j], s.flow[pos - j])
        np.testing.assert_array_equal(ds.y, s.flow[pos + h])
        span = (s.timestamps[pos + h] - s.timestamps[pos - w + 1]).astype(np.int64)
        assert np.all(span == (w - 1 + h) * 900)


class TestSplits:
    def test_28_day_month_proportions(self):
        s = _series(np.ones(28 * 96), start="2019-02-01T00:00")
        ds = build_windows(s, config=DatasetConfig(window=1, horizon=1))
        sp = stratified_monthly_split(ds)
        n = len(ds)
        counts = np.bincount(day_of_month(ds.sample_timestamps))
        assert len(sp.train) == counts[1:15].sum()
        assert len(sp.calibration) == counts[15:22].sum()
        assert len(sp.test) == counts[22:].sum()
        assert abs(len(sp.train) / n - 0.5) < 0.01
        assert abs(len(sp.calibration) / n - 0.25) < 0.01
        assert abs(len(sp.test) / n - 0.25) < 0.01

    def test_day_15_goes_to_calibration(self):
        s = _series(np.arange(4.0), start="2019-03-14T23:30")
        ds = build_windows(s, config=DatasetConfig(window=1, horizon=1))
        dom = day_of_month(ds.sample_timestamps)
        assert list(dom) == [14, 15, 15]

    def test_every_month_in_every_partition(self):
        s = _series(np.ones(365 * 96))
        ds = build_windows(s, config=DatasetConfig(window=1, horizon=1))
        sp = stratified_monthly_split(ds)
        months = ds.sample_timestamps.astype("datetime64[M]")
        for part in (sp.train, sp.calibration, sp.test):
            assert len(np.unique(months[part])) == 12
        all_rows = np.concatenate([sp.train, sp.calibration, sp.test])
        assert len(np.unique(all_rows)) == len(ds)

    def test_empty_partition(self):
        s = _series(np.ones(96 * 5), start="2019-01-01T00:00")
        ds = build_windows(s, config=DatasetConfig(window=1, horizon=1))
        with pytest.raises(SplitError):
            stratified_monthly_split(ds)


class TestStandardizer:
    def test_known_column(self):
        st_ = fit_standardizer(np.array([[1.0], [2.0], [3.0]]), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(st_.x_std, [np.sqrt(2 / 3)])
        np.testing.assert_allclose(st_.transform([[1.0], [2.0], [3.0]])[:, 0], [-1.2247449, 0, 1.2247449], atol=1e-7)

    def test_constant_column_maps_to_zero(self):
        X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
        st_ = fit_standardizer(X, np.zeros(3))
        np.testing.assert_array_equal(st_.transform(X)[:, 0], 0)
        np.testing.assert_array_equal(st_.inverse_transform(st_.transform(X)), X)

    def test_train_moments(self, rng):
        X = rng.normal(3, 2, size=(500, 4))
        Z = fit_standardizer(X, X[:, 0]).transform(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(Z.std(axis=0), 1, atol=1e-9)

    @given(arrays(np.float64, (100, 3), elements=st.floats(-1e4, 1e4)))
    def test_inverse_round_trip(self, X):
        y = X[:, 1]
        st_ = fit_standardizer(X, y)
        back = st_.inverse_transform(st_.transform(X))
        varying = st_.x_std > 0
        np.testing.assert_allclose(back[:, varying], X[:, varying], rtol=1e-10, atol=1e-10 * np.abs(X).max())
        if st_.y_std > 0:
            np.testing.assert_allclose(st_.inverse_y(st_.transform_y(y)), y, rtol=1e-10,
                                       atol=1e-10 * (np.abs(y).max() + 1))


def test_scenario_grid_cardinality():
    grid = scenario_grid([f"s{i}" for i in range(10)])
    assert len(grid) == 320
    assert len(set((s, c) for s, c in grid)) == 320
