"""Sensor series ingestion, supervised windowing, monthly splits and scaling.

A series holds 15-minute flow readings (vehicles/hour) for one loop detector,
optionally with four weather channels. :func:`build_windows` turns it into a
lagged design matrix for a given ``(window, horizon, meteo, calendar)``
configuration and :func:`stratified_monthly_split` partitions the rows by day
of month into train / calibration / test.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError, SplitError

logger = logging.getLogger(__name__)

STEP_SECONDS = 900
WEATHER_COLUMNS = ("temperature", "cloud_cover", "humidity", "precipitation")
CALENDAR_COLUMNS = ("day_of_week", "is_holiday", "is_school_period")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _as_datetime64(values) -> np.ndarray:
    return np.asarray(values, dtype="datetime64[s]")


def _days(timestamps: np.ndarray) -> np.ndarray:
    return timestamps.astype("datetime64[D]")


@dataclass(frozen=True)
class CalendarInfo:
    """Holiday dates and school periods (inclusive ``(start, end)`` pairs)."""

    holiday_dates: frozenset = frozenset()
    school_periods: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "holiday_dates", frozenset(self.holiday_dates))
        periods = tuple((s, e) for s, e in self.school_periods)
        for s, e in periods:
            if e < s:
                raise ConfigError(f"school period ends before it starts: {s}..{e}")
        object.__setattr__(self, "school_periods", periods)

    def features(self, timestamps) -> np.ndarray:
        """Return ``(n, 3)`` columns: day of week (Mon=0), holiday flag, school flag."""
        days = _days(_as_datetime64(timestamps))
        day_num = days.astype(np.int64)
        # 1970-01-01 was a Thursday
        dow = (day_num + 3) % 7
        if self.holiday_dates:
            hol = np.array(sorted(self.holiday_dates), dtype="datetime64[D]")
            is_hol = np.isin(days, hol)
        else:
            is_hol = np.zeros(len(days), dtype=bool)
        is_school = np.zeros(len(days), dtype=bool)
        for s, e in self.school_periods:
            is_school |= (days >= np.datetime64(s, "D")) & (days <= np.datetime64(e, "D"))
        return np.column_stack([dow, is_hol, is_school]).astype(np.float64)


def load_calendar(holidays_path=None, school_path=None) -> CalendarInfo:
    """Read a holiday file (one ISO date per line) and a ``start,end`` school file."""
    holidays = set()
    periods = []
    if holidays_path is not None:
        for lineno, line in enumerate(Path(holidays_path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                holidays.add(dt.date.fromisoformat(line))
            except ValueError as exc:
                raise SchemaError(f"{holidays_path}:{lineno}: bad date {line!r}") from exc
    if school_path is not None:
        for lineno, line in enumerate(Path(school_path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise SchemaError(f"{school_path}:{lineno}: expected 'start,end'")
            try:
                periods.append((dt.date.fromisoformat(parts[0]), dt.date.fromisoformat(parts[1])))
            except ValueError as exc:
                raise SchemaError(f"{school_path}:{lineno}: bad date pair {line!r}") from exc
    return CalendarInfo(frozenset(holidays), tuple(periods))


def save_calendar(calendar: CalendarInfo, holidays_path, school_path) -> None:
    Path(holidays_path).write_text(
        "".join(f"{d.isoformat()}\n" for d in sorted(calendar.holiday_dates)), encoding="utf-8"
    )
    Path(school_path).write_text(
        "".join(f"{s.isoformat()},{e.isoformat()}\n" for s, e in calendar.school_periods),
        encoding="utf-8",
    )


@dataclass(frozen=True)
class SensorSeries:
    sensor_id: str
    timestamps: np.ndarray
    flow: np.ndarray
    weather: np.ndarray | None = None
    dropped_rows: int = 0
    calendar: CalendarInfo | None = None

    def __post_init__(self):
        ts = _as_datetime64(self.timestamps)
        flow = np.asarray(self.flow, dtype=np.float64)
        if ts.ndim != 1 or flow.shape != ts.shape:
            raise DataError("timestamps and flow must be 1-D and of equal length")
        if len(ts) > 1:
            steps = np.diff(ts.astype(np.int64))
            if np.any(steps <= 0):
                bad = int(np.argmax(steps <= 0)) + 1
                raise DataError(f"timestamps not strictly increasing at {ts[bad]}")
            if np.any(steps % STEP_SECONDS):
                bad = int(np.argmax(steps % STEP_SECONDS != 0)) + 1
                raise DataError(f"timestamp {ts[bad]} is off the 15-minute grid")
        if np.any(~np.isfinite(flow)) or np.any(flow < 0):
            raise DataError("flow values must be finite and non-negative")
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "flow", _readonly(flow))
        if self.weather is not None:
            weather = np.asarray(self.weather, dtype=np.float64)
            if weather.shape != (len(ts), len(WEATHER_COLUMNS)):
                raise DataError(f"weather must have shape ({len(ts)}, 4), got {weather.shape}")
            object.__setattr__(self, "weather", _readonly(weather))

    def __len__(self) -> int:
        return len(self.flow)

    @property
    def has_weather(self) -> bool:
        return self.weather is not None


def load_csv(path, calendar: CalendarInfo | None = None, sensor_id: str | None = None) -> SensorSeries:
    """Parse a ``timestamp,flow[,temperature,cloud_cover,humidity,precipitation]`` CSV.

    Rows with an unparsable or negative value are dropped and counted in
    ``dropped_rows``. Records are sorted chronologically; a repeated
    timestamp raises :class:`DataError`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in ("timestamp", "flow") if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s) {', '.join(missing)}")
        present = [c for c in WEATHER_COLUMNS if c in header]
        if present and len(present) != len(WEATHER_COLUMNS):
            lacking = sorted(set(WEATHER_COLUMNS) - set(present))
            raise SchemaError(f"{path}: incomplete weather columns, missing {', '.join(lacking)}")
        i_ts, i_flow = header.index("timestamp"), header.index("flow")
        i_weather = [header.index(c) for c in present]

        stamps, flows, weather = [], [], []
        dropped = 0
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                ts = dt.datetime.fromisoformat(row[i_ts].strip())
                value = float(row[i_flow])
                wx = [float(row[i]) for i in i_weather]
            except (ValueError, IndexError):
                dropped += 1
                continue
            if not math.isfinite(value) or value < 0 or not all(math.isfinite(v) for v in wx):
                dropped += 1
                continue
            if ts.tzinfo is not None:
                ts = ts.replace(tzinfo=None)
            stamps.append(ts)
            flows.append(value)
            weather.append(wx)
    if dropped:
        logger.info("%s: dropped %d malformed row(s)", path, dropped)

    order = sorted(range(len(stamps)), key=stamps.__getitem__)
    stamps = [stamps[i] for i in order]
    for a, b in zip(stamps, stamps[1:]):
        if a == b:
            raise DataError(f"{path}: duplicate timestamp {b.isoformat()}")
    ts = np.array(stamps, dtype="datetime64[s]") if stamps else np.array([], dtype="datetime64[s]")
    flow = np.array([flows[i] for i in order], dtype=np.float64)
    wx = np.array([weather[i] for i in order], dtype=np.float64).reshape(len(order), -1) if present else None
    return SensorSeries(
        sensor_id=sensor_id if sensor_id is not None else path.stem,
        timestamps=ts,
        flow=flow,
        weather=wx,
        dropped_rows=dropped,
        calendar=calendar,
    )


def save_csv(series: SensorSeries, path) -> None:
    header = ["timestamp", "flow"]
    if series.has_weather:
        header += list(WEATHER_COLUMNS)
    stamps = series.timestamps.astype("datetime64[s]").astype(str)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, ts in enumerate(stamps):
            row = [ts, repr(float(series.flow[i]))]
            if series.has_weather:
                row += [repr(float(v)) for v in series.weather[i]]
            writer.writerow(row)


@dataclass(frozen=True)
class DatasetConfig:
    window: int = 5
    horizon: int = 1
    use_meteo: bool = False
    use_calendar: bool = False
    alpha: float = 0.1

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise ConfigError(f"window must be a positive integer, got {self.window}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "use_meteo", bool(self.use_meteo))
        object.__setattr__(self, "use_calendar", bool(self.use_calendar))

    @property
    def n_columns(self) -> int:
        return self.window + 4 * self.use_meteo + 3 * self.use_calendar

    def feature_names(self) -> list[str]:
        names = ["flow_t0"] + [f"flow_t-{j}" for j in range(1, self.window)]
        if self.use_meteo:
            names += list(WEATHER_COLUMNS)
        if self.use_calendar:
            names += list(CALENDAR_COLUMNS)
        return names


@dataclass(frozen=True)
class WindowedDataset:
    X: np.ndarray
    y: np.ndarray
    sample_timestamps: np.ndarray
    query_timestamps: np.ndarray
    config: DatasetConfig
    sensor_id: str = ""

    def __post_init__(self):
        if self.X.shape[0] != len(self.y):
            raise DataError("X and y row counts differ")
        if self.X.shape[1] != self.config.n_columns:
            raise DataError("column count does not match the dataset config")
        for name in ("X", "y", "sample_timestamps", "query_timestamps"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def __len__(self) -> int:
        return len(self.y)

    @property
    def feature_names(self) -> list[str]:
        return self.config.feature_names()


def build_windows(
    series: SensorSeries,
    calendar: CalendarInfo | None = None,
    config: DatasetConfig | None = None,
) -> WindowedDataset:
    """Lagged design matrix: ``(flow[t], ..., flow[t-w+1], weather[t], calendar[t]) -> flow[t+h]``.

    Rows whose lag window or target would cross a missing timestamp are
    omitted.
    """
    config = config or DatasetConfig()
    calendar = calendar if calendar is not None else series.calendar
    w, h = config.window, config.horizon
    if config.use_meteo and not series.has_weather:
        raise ConfigError(f"sensor {series.sensor_id}: meteo features requested but series has no weather")
    if config.use_calendar and calendar is None:
        raise ConfigError("calendar features requested but no CalendarInfo supplied")
    n = len(series)
    if n < w + h:
        raise DataError(f"series of length {n} too short for window={w}, horizon={h}")

    secs = series.timestamps.astype(np.int64)
    t = np.arange(w - 1, n - h)
    # strictly increasing on a 900 s grid, so equal span means no gap inside
    valid = (secs[t + h] - secs[t - w + 1]) == (w - 1 + h) * STEP_SECONDS
    t = t[valid]

    cols = [series.flow[t - j] for j in range(w)]
    X = np.column_stack(cols)
    if config.use_meteo:
        X = np.hstack([X, series.weather[t]])
    if config.use_calendar:
        X = np.hstack([X, calendar.features(series.timestamps[t])])
    return WindowedDataset(
        X=X.astype(np.float64),
        y=series.flow[t + h].astype(np.float64),
        sample_timestamps=series.timestamps[t + h],
        query_timestamps=series.timestamps[t],
        config=config,
        sensor_id=series.sensor_id,
    )


@dataclass(frozen=True)
class DatasetSplits:
    train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "calibration", "test"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int64)))
        sets = [set(self.train.tolist()), set(self.calibration.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise SplitError("split partitions overlap")


def day_of_month(timestamps) -> np.ndarray:
    days = _days(_as_datetime64(timestamps))
    return (days - days.astype("datetime64[M]")).astype(np.int64) + 1


def stratified_monthly_split(dataset: WindowedDataset) -> DatasetSplits:
    """Days 1-14 of each month train, 15-21 calibrate, 22-end test (by target day)."""
    dom = day_of_month(dataset.sample_timestamps)
    idx = np.arange(len(dataset))
    splits = DatasetSplits(
        train=idx[dom <= 14],
        calibration=idx[(dom >= 15) & (dom <= 21)],
        test=idx[dom >= 22],
    )
    for name in ("train", "calibration", "test"):
        if len(getattr(splits, name)) == 0:
            raise SplitError(f"{name} partition is empty")
    return splits


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring with population standard deviation.

    Zero-variance columns are mapped to zero and restored to their mean.
    """

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        zero = self.x_std == 0
        scale = np.where(zero, 1.0, self.x_std)
        Z = (X - self.x_mean) / scale
        if np.any(zero):
            Z[..., zero] = 0.0
        return Z

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z * self.x_std + self.x_mean

    def transform_y(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.y_std == 0:
            return np.zeros_like(y)
        return (y - self.y_mean) / self.y_std

    def inverse_y(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.y_std + self.y_mean


def fit_standardizer(X, y) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("cannot fit a standardizer on an empty matrix")
    return Standardizer(
        x_mean=_readonly(X.mean(axis=0)),
        x_std=_readonly(X.std(axis=0)),
        y_mean=float(y.mean()),
        y_std=float(y.std()),
    )


def scenario_grid(
    sensors: Sequence[str],
    windows: Iterable[int] = (1, 5),
    meteo: Iterable[bool] = (False, True),
    calendar: Iterable[bool] = (False, True),
    horizons: Iterable[int] = (1, 2, 4, 8),
    alpha: float = 0.1,
) -> list[tuple[str, DatasetConfig]]:
    """Every ``(sensor, DatasetConfig)`` in the cartesian product, in stable order."""
    out = []
    for s in sensors:
        for w in windows:
            for m in meteo:
                for c in calendar:
                    for h in horizons:
                        out.append((s, DatasetConfig(window=w, horizon=h, use_meteo=m, use_calendar=c, alpha=alpha)))
    return out
