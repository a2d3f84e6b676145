"""Interval quality metrics, calibration curves and a coverage-drift monitor."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, MetricError, ShapeError
from .uncertainty import PredictionInterval

DEFAULT_ALPHA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
RMIL_FLOOR = 1e-6


def _bounds(intervals):
    if isinstance(intervals, PredictionInterval):
        return intervals.lower, intervals.upper
    intervals = list(intervals)
    if intervals and isinstance(intervals[0], PredictionInterval):
        iv = PredictionInterval.stack(intervals)
        return iv.lower, iv.upper
    lower, upper = intervals
    return np.asarray(lower, dtype=np.float64), np.asarray(upper, dtype=np.float64)


def mil(intervals) -> float:
    """Mean interval length: average of ``upper - lower``."""
    lo, hi = _bounds(intervals)
    if len(lo) == 0:
        raise MetricError("MIL of an empty interval set")
    return float(np.mean(hi - lo))


def icp(intervals, y_true) -> float:
    """Interval coverage: fraction of ``y`` with ``lower <= y <= upper``."""
    lo, hi = _bounds(intervals)
    y = np.asarray(y_true, dtype=np.float64)
    if y.shape != lo.shape:
        raise ShapeError(f"{len(y)} targets for {len(lo)} intervals")
    if len(y) == 0:
        raise MetricError("ICP of an empty interval set")
    return float(np.mean((lo <= y) & (y <= hi)))


def rmil(intervals, y_true, y_hat=None, floor: float = RMIL_FLOOR) -> float:
    """Width relative to absolute error, averaged; errors below ``floor`` use ``floor``."""
    if not floor > 0:
        raise ConfigError(f"RMIL floor must be positive, got {floor}")
    lo, hi = _bounds(intervals)
    if y_hat is None:
        if not isinstance(intervals, PredictionInterval):
            raise MetricError("y_hat is required unless a PredictionInterval is given")
        y_hat = intervals.point
    y = np.asarray(y_true, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if not (y.shape == y_hat.shape == lo.shape):
        raise ShapeError("intervals, y_true and y_hat differ in length")
    if len(y) == 0:
        raise MetricError("RMIL of an empty interval set")
    return float(np.mean((hi - lo) / np.maximum(np.abs(y - y_hat), floor)))


def r_squared(y_true, y_hat) -> float:
    """Coefficient of determination; NaN when ``y_true`` is constant."""
    y = np.asarray(y_true, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError("y_true and y_hat differ in length")
    if len(y) == 0:
        raise MetricError("R^2 of an empty sample")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return math.nan
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


@dataclass(frozen=True, eq=False)
class CalibrationCurve:
    confidence: np.ndarray
    coverage: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.confidence, dtype=np.float64)
        v = np.asarray(self.coverage, dtype=np.float64)
        if c.shape != v.shape or c.ndim != 1 or len(c) == 0:
            raise ShapeError("confidence and coverage must be equal-length non-empty 1-D arrays")
        if np.any(np.diff(c) <= 0):
            raise ValueError("confidence grid must be strictly increasing")
        if np.any((c < 0) | (c > 1)) or np.any((v < 0) | (v > 1)):
            raise ValueError("confidence and coverage must lie in [0, 1]")
        object.__setattr__(self, "confidence", c)
        object.__setattr__(self, "coverage", v)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["confidence", "coverage"])
            for c, v in zip(self.confidence, self.coverage):
                writer.writerow([repr(float(c)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "CalibrationCurve":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["confidence"]) for r in rows], [float(r["coverage"]) for r in rows])


def calibration_curve(method, X, y_true, alphas: Iterable[float] | None = None) -> CalibrationCurve:
    """Observed coverage at each nominal confidence ``1 - alpha``.

    Methods with a fixed set of ``supported_alphas`` (quantile regression)
    are evaluated only at those levels.
    """
    alphas = list(DEFAULT_ALPHA_GRID if alphas is None else alphas)
    if not alphas:
        raise ConfigError("empty alpha grid")
    supported = getattr(method, "supported_alphas", None)
    if supported is not None:
        keep = [a for a in alphas if any(math.isclose(a, s, abs_tol=1e-12) for s in supported)]
        alphas = keep or list(supported)
    alphas = sorted(set(alphas), reverse=True)
    intervals = method.predict_intervals(X, alphas)
    conf = np.array([1.0 - a for a in alphas])
    cov = np.array([icp(iv, y_true) for iv in intervals])
    return CalibrationCurve(conf, cov)


def miscalibration_area(curve: CalibrationCurve) -> float:
    """Trapezoidal integral of ``|coverage - confidence|`` over the grid.

    A single-point curve spans no interval, so its area is NaN.
    """
    c = curve.confidence
    gap = np.abs(curve.coverage - c)
    if len(c) < 2:
        return math.nan
    return float(np.sum(np.diff(c) * (gap[1:] + gap[:-1]) / 2.0))


@dataclass(frozen=True)
class MetricReport:
    r2: float
    mil: float
    icp: float
    rmil: float
    miscalibration_area: float
    T: int

    def __post_init__(self):
        if self.T < 1:
            raise MetricError("T must be >= 1")
        if not 0 <= self.icp <= 1:
            raise MetricError("ICP outside [0, 1]")
        if self.mil < 0:
            raise MetricError("negative MIL")


def evaluate(intervals: PredictionInterval, y_true, curve: CalibrationCurve | None = None,
             rmil_floor: float = RMIL_FLOOR) -> MetricReport:
    return MetricReport(
        r2=r_squared(y_true, intervals.point),
        mil=mil(intervals),
        icp=icp(intervals, y_true),
        rmil=rmil(intervals, y_true, floor=rmil_floor),
        miscalibration_area=miscalibration_area(curve) if curve is not None else math.nan,
        T=len(intervals),
    )


@dataclass(frozen=True)
class AlarmEvent:
    index: int
    miss_rate: float
    threshold: float


class CoverageDriftMonitor:
    """Sliding-window miss-rate monitor.

    Raises an alarm when the miss rate over the last ``window`` observations
    exceeds ``alpha + kappa * sqrt(alpha (1 - alpha) / window)``. One event is
    emitted per excursion, at the index of the window end where it starts.
    """

    def __init__(self, window: int, alpha: float, kappa: float = 4.0):
        if window < 30:
            raise ConfigError(f"window must be >= 30, got {window}")
        if not 0 < alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        if kappa < 0:
            raise ConfigError("kappa must be non-negative")
        self.window = window
        self.alpha = alpha
        self.kappa = kappa
        self.threshold = alpha + kappa * math.sqrt(alpha * (1 - alpha) / window)
        self.reset()

    def reset(self) -> None:
        self._misses = deque()
        self._count = 0
        self._index = -1
        self._active = False

    def update(self, lower: float, upper: float, y: float) -> AlarmEvent | None:
        self._index += 1
        miss = not (lower <= y <= upper)
        self._misses.append(miss)
        self._count += miss
        if len(self._misses) > self.window:
            self._count -= self._misses.popleft()
        if len(self._misses) < self.window:
            return None
        rate = self._count / self.window
        if rate > self.threshold:
            if not self._active:
                self._active = True
                return AlarmEvent(self._index, rate, self.threshold)
        else:
            self._active = False
        return None


def coverage_drift_monitor(stream, window: int, alpha: float, kappa: float = 4.0) -> list[AlarmEvent]:
    """Run a fresh monitor over ``(lower, upper, y)`` triples (or ``(interval, y)`` pairs)."""
    monitor = CoverageDriftMonitor(window, alpha, kappa)
    events = []
    for item in stream:
        if len(item) == 2:
            (lower, upper), y = item[0] if not isinstance(item[0], PredictionInterval) else (
                (float(item[0].lower[0]), float(item[0].upper[0]))), item[1]
        else:
            lower, upper, y = item
        event = monitor.update(lower, upper, y)
        if event is not None:
            events.append(event)
    return events
