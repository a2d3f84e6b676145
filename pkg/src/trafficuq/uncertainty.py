"""Prediction-interval estimators.

Every estimator maps a fitted model, a batch of query rows and a
significance level ``alpha`` to a :class:`PredictionInterval` with nominal
coverage ``1 - alpha``:

* split conformal prediction around any point forecaster,
* percentiles of the per-estimator spread of a tree ensemble,
* a pair of pinball-loss quantile models plus a median model,
* Monte Carlo dropout percentiles,
* Gaussian intervals from a heteroscedastic (mean, variance) network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import (CalibrationError, ConfigError, InsufficientCalibrationError, ModelError,
                     ShapeError)
from .neural import MLPModel, mc_dropout_samples
from .regressors import EnsembleModel, type1_quantile

UQ_KINDS = ("conformal", "ensemble", "quantile", "mc_dropout", "heteroscedastic")


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True, eq=False)
class PredictionInterval:
    """Point forecasts with lower/upper bounds for a batch of queries."""

    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    crossings: int = 0

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(getattr(self, k), dtype=np.float64)) for k in ("point", "lower", "upper")]
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape) or arrays[0].ndim != 1:
            raise ShapeError("point, lower and upper must be 1-D arrays of equal length")
        if np.any(arrays[1] > arrays[2]):
            raise ValueError("lower bound above upper bound")
        for k, a in zip(("point", "lower", "upper"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, k, a)
        _check_alpha(self.alpha)

    def __len__(self) -> int:
        return len(self.point)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def confidence(self) -> float:
        return 1.0 - self.alpha

    def affine(self, scale: float, shift: float) -> "PredictionInterval":
        """Map every quantity through ``v -> scale * v + shift`` (``scale >= 0``)."""
        if scale < 0:
            raise ValueError("scale must be non-negative")
        return PredictionInterval(self.point * scale + shift, self.lower * scale + shift,
                                  self.upper * scale + shift, self.alpha, self.crossings)

    @classmethod
    def stack(cls, intervals: Sequence["PredictionInterval"]) -> "PredictionInterval":
        if not intervals:
            raise ValueError("nothing to stack")
        alphas = {iv.alpha for iv in intervals}
        if len(alphas) != 1:
            raise ValueError("cannot stack intervals with different alpha")
        return cls(np.concatenate([iv.point for iv in intervals]),
                   np.concatenate([iv.lower for iv in intervals]),
                   np.concatenate([iv.upper for iv in intervals]),
                   alphas.pop(), sum(iv.crossings for iv in intervals))


@dataclass(frozen=True, eq=False)
class CalibrationScores:
    scores: np.ndarray

    def __post_init__(self):
        s = np.sort(np.asarray(self.scores, dtype=np.float64))
        if s.ndim != 1:
            raise ShapeError("scores must be 1-D")
        if np.any(~np.isfinite(s)) or np.any(s < 0):
            raise CalibrationError("scores must be finite and non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return len(self.scores)


def _point(model, X) -> np.ndarray:
    return np.asarray(model.predict(X) if hasattr(model, "predict") else model(X), dtype=np.float64)


def conformal_calibrate(model, X_cal, y_cal) -> CalibrationScores:
    """Absolute residuals of ``model`` on held-out calibration rows, sorted."""
    y_cal = np.asarray(y_cal, dtype=np.float64)
    if len(y_cal) == 0:
        raise CalibrationError("empty calibration set")
    pred = _point(model, X_cal)
    if pred.shape != y_cal.shape:
        raise ShapeError("calibration predictions and targets differ in length")
    return CalibrationScores(np.abs(y_cal - pred))


def conformal_quantile(scores: CalibrationScores, alpha: float) -> float:
    """``s_(k)`` with ``k = ceil((n + 1)(1 - alpha))``."""
    _check_alpha(alpha)
    n = scores.n
    if n == 0:
        raise CalibrationError("empty calibration set")
    k = math.ceil((n + 1) * (1.0 - alpha) - 1e-9)
    if k > n:
        raise InsufficientCalibrationError(
            f"{n} calibration scores cannot support alpha={alpha} (needs index {k})")
    return float(scores.scores[max(k, 1) - 1])


def conformal_interval(model, scores: CalibrationScores, X, alpha: float) -> PredictionInterval:
    q = conformal_quantile(scores, alpha)
    point = _point(model, X)
    return PredictionInterval(point, point - q, point + q, alpha)


def interval_from_samples(samples, alpha: float, point=None) -> PredictionInterval:
    """Type-1 ``alpha/2`` and ``1 - alpha/2`` quantiles along each row of ``samples``.

    ``samples`` has shape ``(n_queries, n_draws)``; the point defaults to the
    row mean.
    """
    _check_alpha(alpha)
    S = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    lo = type1_quantile(S, alpha / 2.0, axis=1)
    hi = type1_quantile(S, 1.0 - alpha / 2.0, axis=1)
    point = S.mean(axis=1) if point is None else np.asarray(point, dtype=np.float64)
    return PredictionInterval(point, lo, hi, alpha)


def ensemble_interval(model: EnsembleModel, X, alpha: float) -> PredictionInterval:
    if model.kind == "gradient_boosting":
        raise ModelError("boosting stages are not exchangeable forecasters; use conformal or quantile")
    if model.n_estimators < 2:
        raise ModelError("degenerate ensemble: at least 2 estimators are needed")
    return interval_from_samples(model.predict_per_estimator(X), alpha, point=model.predict(X))


def quantile_interval(lower_model, median_model, upper_model, X, alpha: float) -> PredictionInterval:
    """Bounds from the two quantile models, point from the median model.

    Crossed bounds are swapped; the number of swapped rows is kept in
    ``crossings``.
    """
    lo = _point(lower_model, X)
    hi = _point(upper_model, X)
    mid = _point(median_model, X)
    crossed = lo > hi
    lo2 = np.where(crossed, hi, lo)
    hi2 = np.where(crossed, lo, hi)
    return PredictionInterval(mid, lo2, hi2, alpha, int(crossed.sum()))


def mcdropout_interval(model: MLPModel, X, alpha: float, n_passes: int = 100, seed: int = 0) -> PredictionInterval:
    if n_passes < 10:
        raise ConfigError(f"at least 10 dropout passes are needed, got {n_passes}")
    return interval_from_samples(mc_dropout_samples(model, X, n_passes, seed).T, alpha)


def gaussian_interval(mu, sigma, alpha: float) -> PredictionInterval:
    _check_alpha(alpha)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(~np.isfinite(sigma)) or np.any(sigma < 0):
        raise ModelError("predicted sigma is not finite and non-negative")
    z = norm.ppf(1.0 - alpha / 2.0)
    return PredictionInterval(mu, mu - z * sigma, mu + z * sigma, alpha)


def heteroscedastic_interval(model: MLPModel, X, alpha: float) -> PredictionInterval:
    mu, sigma = model.predict_gaussian(X)
    return gaussian_interval(mu, sigma, alpha)


class UQMethod:
    """Common interface: ``predict_intervals(X, alphas)`` -> list of intervals."""

    kind = ""
    calibrated = False
    supported_alphas: tuple | None = None

    def point(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_intervals(self, X, alphas) -> list:
        return [self.predict_interval(X, a) for a in alphas]

    def predict_interval(self, X, alpha: float) -> PredictionInterval:
        return self.predict_intervals(X, [alpha])[0]


class ConformalMethod(UQMethod):
    kind = "conformal"
    calibrated = True

    def __init__(self, model, scores: CalibrationScores):
        self.model = model
        self.scores = scores

    @classmethod
    def calibrate(cls, model, X_cal, y_cal) -> "ConformalMethod":
        return cls(model, conformal_calibrate(model, X_cal, y_cal))

    def point(self, X):
        return _point(self.model, X)

    def predict_intervals(self, X, alphas):
        p = self.point(X)
        out = []
        for a in alphas:
            q = conformal_quantile(self.scores, a)
            out.append(PredictionInterval(p, p - q, p + q, a))
        return out


class EnsembleMethod(UQMethod):
    kind = "ensemble"

    def __init__(self, model: EnsembleModel):
        if model.kind == "gradient_boosting":
            raise ModelError("ensemble intervals are not defined for gradient boosting")
        if model.n_estimators < 2:
            raise ModelError("degenerate ensemble: at least 2 estimators are needed")
        self.model = model

    def point(self, X):
        return self.model.predict(X)

    def predict_intervals(self, X, alphas):
        P = self.model.predict_per_estimator(X)
        p = self.model.predict(X)
        return [interval_from_samples(P, a, point=p) for a in alphas]


class QuantileMethod(UQMethod):
    kind = "quantile"

    def __init__(self, lower_model, median_model, upper_model, alpha: float):
        _check_alpha(alpha)
        self.lower_model = lower_model
        self.median_model = median_model
        self.upper_model = upper_model
        self.alpha = alpha
        self.supported_alphas = (alpha,)

    def point(self, X):
        return _point(self.median_model, X)

    def predict_intervals(self, X, alphas):
        out = []
        for a in alphas:
            if not math.isclose(a, self.alpha, rel_tol=0, abs_tol=1e-12):
                raise ConfigError(f"quantile models were trained for alpha={self.alpha}, not {a}")
            out.append(quantile_interval(self.lower_model, self.median_model, self.upper_model, X, self.alpha))
        return out


class MCDropoutMethod(UQMethod):
    kind = "mc_dropout"

    def __init__(self, model: MLPModel, n_passes: int = 100, seed: int = 0):
        if n_passes < 10:
            raise ConfigError(f"at least 10 dropout passes are needed, got {n_passes}")
        if model.config.dropout_rate == 0:
            mc_dropout_samples(model, np.zeros((1, model.n_features)), 1)
        self.model = model
        self.n_passes = n_passes
        self.seed = seed

    def point(self, X):
        return mc_dropout_samples(self.model, X, self.n_passes, self.seed).mean(axis=0)

    def predict_intervals(self, X, alphas):
        S = mc_dropout_samples(self.model, X, self.n_passes, self.seed).T
        return [interval_from_samples(S, a) for a in alphas]


class HeteroscedasticMethod(UQMethod):
    kind = "heteroscedastic"

    def __init__(self, model: MLPModel):
        if model.config.output_head != "gaussian":
            raise ConfigError("heteroscedastic intervals need a gaussian-head network")
        self.model = model

    def point(self, X):
        return self.model.predict_gaussian(X)[0]

    def predict_intervals(self, X, alphas):
        mu, sigma = self.model.predict_gaussian(X)
        return [gaussian_interval(mu, sigma, a) for a in alphas]


class Destandardized(UQMethod):
    """Run ``inner`` on standardized inputs and report intervals in original units."""

    def __init__(self, inner: UQMethod, standardizer):
        self.inner = inner
        self.standardizer = standardizer
        self.kind = inner.kind
        self.calibrated = inner.calibrated
        self.supported_alphas = inner.supported_alphas

    def point(self, X):
        return self.standardizer.inverse_y(self.inner.point(self.standardizer.transform(X)))

    def predict_intervals(self, X, alphas):
        s = self.standardizer
        return [iv.affine(s.y_std, s.y_mean) for iv in self.inner.predict_intervals(s.transform(X), alphas)]
