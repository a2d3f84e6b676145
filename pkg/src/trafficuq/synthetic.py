"""Seeded surrogate for urban loop-detector flow.

The deterministic level is a two-peak weekday profile (morning and evening
rush) over a daytime plateau, attenuated on weekends and holidays and by
rain. Observations add Gaussian noise whose standard deviation grows with
the level, ``sigma(t) = sigma0 + kappa * level(t)``, so the heteroscedastic
ground truth is known exactly. ``ar_coef`` correlates the standardized noise
in time (marginal variance unchanged).
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .data import STEP_SECONDS, CalendarInfo, SensorSeries
from .errors import ConfigError

SLOTS_PER_DAY = 86400 // STEP_SECONDS

_HOLIDAYS_MD = [(1, 1), (1, 6), (5, 1), (5, 2), (5, 15), (8, 15), (10, 12), (11, 1), (11, 9), (12, 6), (12, 8), (12, 25)]


@dataclass(frozen=True)
class SyntheticConfig:
    start: str = "2019-01-01"
    scale: float = 1.0
    base_level: float = 80.0
    daytime_level: float = 350.0
    morning_peak_amplitude: float = 900.0
    morning_peak_hour: float = 8.0
    morning_peak_width: float = 1.2
    evening_peak_amplitude: float = 700.0
    evening_peak_hour: float = 18.5
    evening_peak_width: float = 1.8
    weekend_factor: float = 0.55
    holiday_factor: float = 0.5
    school_boost: float = 0.1
    rain_effect: float = 0.1
    sigma0: float = 15.0
    kappa: float = 0.08
    ar_coef: float = 0.6

    def __post_init__(self):
        try:
            dt.date.fromisoformat(self.start)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"start must be an ISO date, got {self.start!r}") from exc
        for name in ("morning_peak_amplitude", "evening_peak_amplitude", "morning_peak_width",
                     "evening_peak_width", "scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("base_level", "daytime_level", "school_boost", "rain_effect", "kappa"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.sigma0 < 0:
            raise ConfigError(f"sigma0 must be non-negative, got {self.sigma0}")
        for name in ("weekend_factor", "holiday_factor"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {getattr(self, name)}")
        if not 0 <= self.ar_coef < 1:
            raise ConfigError(f"ar_coef must lie in [0, 1), got {self.ar_coef}")
        if not 0 <= self.morning_peak_hour < 24 or not 0 <= self.evening_peak_hour < 24:
            raise ConfigError("peak hours must lie in [0, 24)")

    def replace(self, **changes) -> "SyntheticConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "SyntheticConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown synthetic profile key {key!r}")
            kwargs[key] = str(raw) if key == "start" else float(raw)
        return cls(**kwargs)


def load_synthetic_config(path) -> SyntheticConfig:
    """Parse a flat ``key = value`` text file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    try:
        return SyntheticConfig.from_mapping(values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def save_synthetic_config(profile: SyntheticConfig, path) -> None:
    lines = [f"{f.name} = {getattr(profile, f.name)}" for f in dataclasses.fields(profile)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def default_calendar(years) -> CalendarInfo:
    """Fixed-date holidays and three school terms per academic year."""
    years = sorted(set(int(y) for y in years))
    holidays = {dt.date(y, m, d) for y in years for m, d in _HOLIDAYS_MD}
    periods = []
    for y in range(years[0] - 1, years[-1] + 1):
        periods += [
            (dt.date(y, 9, 9), dt.date(y, 12, 20)),
            (dt.date(y + 1, 1, 8), dt.date(y + 1, 4, 10)),
            (dt.date(y + 1, 4, 21), dt.date(y + 1, 6, 21)),
        ]
    return CalendarInfo(frozenset(holidays), tuple(periods))


def _gauss(hour, centre, width):
    d = np.abs(hour - centre)
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def expected_level(timestamps, weather, calendar: CalendarInfo, profile: SyntheticConfig) -> np.ndarray:
    """Noise-free flow level (vehicles/hour) at each timestamp."""
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    secs = ts.astype(np.int64)
    hour = (secs % 86400) / 3600.0
    cal = calendar.features(ts)
    dow, is_hol, is_school = cal[:, 0], cal[:, 1].astype(bool), cal[:, 2]

    plateau = _logistic((hour - 6.5) / 0.5) * _logistic((21.5 - hour) / 0.7)
    morning = profile.morning_peak_amplitude * _gauss(hour, profile.morning_peak_hour, profile.morning_peak_width)
    morning = morning * (1.0 + profile.school_boost * is_school)
    evening = profile.evening_peak_amplitude * _gauss(hour, profile.evening_peak_hour, profile.evening_peak_width)
    active = profile.daytime_level * plateau + morning + evening

    factor = np.ones_like(hour)
    factor[dow >= 5] = profile.weekend_factor
    factor[is_hol] = np.minimum(factor[is_hol], profile.holiday_factor)
    level = profile.base_level + factor * active
    if weather is not None:
        rain = np.minimum(np.asarray(weather)[:, 3] / 5.0, 1.0)
        level = level * (1.0 - profile.rain_effect * rain)
    return profile.scale * level


def noise_sigma(level, profile: SyntheticConfig) -> np.ndarray:
    return profile.sigma0 * profile.scale + profile.kappa * np.asarray(level)


def _ar1(rng, n, coef):
    """Unit-variance stationary AR(1) path of length ``n``."""
    z = rng.standard_normal(n)
    if coef == 0 or n == 1:
        return z
    out = np.empty(n)
    out[0] = z[0]
    out[1:], _ = lfilter([np.sqrt(1.0 - coef * coef)], [1.0, -coef], z[1:], zi=[coef * z[0]])
    return out


def generate_weather(timestamps, rng) -> np.ndarray:
    """Temperature (C), cloud cover, humidity (fractions) and rain (mm/h)."""
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    secs = ts.astype(np.int64)
    hour = (secs % 86400) / 3600.0
    doy = (ts.astype("datetime64[D]") - ts.astype("datetime64[Y]")).astype(np.int64)
    n = len(ts)
    temp = (14.0 + 9.0 * np.sin(2 * np.pi * (doy - 110) / 365.0)
            + 5.0 * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
            + 1.5 * _ar1(rng, n, 0.995))
    cloud_latent = _ar1(rng, n, 0.995)
    cloud = _logistic(1.5 * cloud_latent)
    humidity = np.clip(0.55 + 0.3 * (cloud - 0.5) - 0.01 * (temp - 15.0) + 0.03 * rng.standard_normal(n), 0.0, 1.0)
    rain_latent = 0.7 * cloud_latent + 0.7 * _ar1(rng, n, 0.98)
    precip = np.maximum(rain_latent - 1.3, 0.0) * 4.0
    return np.column_stack([temp, cloud, humidity, precip])


def generate_synthetic(
    profile: SyntheticConfig | None = None,
    days: int = 365,
    seed: int = 0,
    sensor_id: str = "synthetic",
    calendar: CalendarInfo | None = None,
) -> SensorSeries:
    """Simulate ``days`` days of 15-minute readings, weather included."""
    profile = profile or SyntheticConfig()
    if int(days) != days or days < 1:
        raise ConfigError(f"days must be a positive integer, got {days}")
    start = np.datetime64(profile.start, "s")
    n = int(days) * SLOTS_PER_DAY
    ts = start + np.arange(n, dtype=np.int64) * np.timedelta64(STEP_SECONDS, "s")
    if calendar is None:
        years = range(int(str(ts[0])[:4]), int(str(ts[-1])[:4]) + 1)
        calendar = default_calendar(years)

    weather_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    weather = generate_weather(ts, weather_rng)
    level = expected_level(ts, weather, calendar, profile)
    sigma = noise_sigma(level, profile)
    if np.any(sigma > 0):
        flow = level + sigma * _ar1(noise_rng, n, profile.ar_coef)
    else:
        flow = level.copy()
    flow = np.maximum(flow, 0.0)
    return SensorSeries(sensor_id=sensor_id, timestamps=ts, flow=flow, weather=weather, calendar=calendar)
