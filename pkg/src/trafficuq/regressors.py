"""Tree ensembles used as point forecasters: random forest, extra trees,
gradient boosting (squared or pinball loss) and AdaBoost.R2.

All fitting is a pure function of ``(X, y, config, seed)``; per-estimator
seeds are spawned from the master seed, so threaded and serial fits agree
bit for bit.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _tree_kernels as K
from .errors import ConfigError, FitError, ModelError, ShapeError

KINDS = ("random_forest", "extra_trees", "gradient_boosting", "adaboost_r2")
MODEL_FORMAT_VERSION = 1
_TOL = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    feature_subsampling: float = 1.0
    split_mode: str = "best"

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0 or None")
        if not 0 < self.feature_subsampling <= 1:
            raise ConfigError("feature_subsampling must lie in (0, 1]")
        if self.split_mode not in ("best", "random-threshold"):
            raise ConfigError(f"unknown split_mode {self.split_mode!r}")

    def n_candidates(self, n_features: int) -> int:
        return max(1, int(round(self.feature_subsampling * n_features)))


@dataclass(frozen=True)
class LossSpec:
    kind: str = "squared"
    tau: float = 0.5

    def __post_init__(self):
        if self.kind not in ("squared", "pinball"):
            raise ConfigError(f"unknown loss {self.kind!r}")
        if self.kind == "pinball" and not 0 < self.tau < 1:
            raise ConfigError(f"pinball tau must lie in (0, 1), got {self.tau}")


def pinball_loss(tau, y, y_hat):
    """Mean of ``max(tau * r, (tau - 1) * r)`` with ``r = y - y_hat``."""
    if not 0 < tau < 1:
        raise ConfigError(f"tau must lie in (0, 1), got {tau}")
    r = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return float(np.mean(np.maximum(tau * r, (tau - 1.0) * r)))


def type1_quantile(values, q: float, axis: int = -1):
    """Lowest value whose cumulative fraction reaches ``q`` (inverse empirical CDF)."""
    v = np.sort(np.asarray(values, dtype=np.float64), axis=axis)
    n = v.shape[axis]
    if n == 0:
        raise ValueError("quantile of an empty sample")
    k = min(max(math.ceil(q * n - 1e-9), 1), n)
    return np.take(v, k - 1, axis=axis)


def weighted_quantile_rows(values, weights, q: float) -> np.ndarray:
    """Row-wise type-1 weighted quantile; ties go to the lower position."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    order = np.argsort(values, axis=1, kind="stable")
    sv = np.take_along_axis(values, order, axis=1)
    cw = np.cumsum(weights[order], axis=1)
    target = q * cw[:, -1:] * (1.0 - _TOL)
    pos = np.argmax(cw >= target, axis=1)
    return sv[np.arange(len(sv)), pos]


def _check_Xy(X, y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    if y is None:
        return X
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 1 or len(y) != len(X):
        raise ShapeError("y must be 1-D with one entry per row of X")
    if len(y) == 0:
        raise FitError("cannot fit on an empty dataset")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FitError("non-finite values in training data")
    return X, y


def _presort(X):
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _seed_ints(seed, n):
    return [int(s.generate_state(1, np.uint32)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    n_features: int

    @classmethod
    def constant(cls, value: float, n_features: int) -> "RegressionTree":
        return cls(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]),
                   np.array([float(value)]), np.ones(1), n_features)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = _check_Xy(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} columns, got {X.shape[1]}")
        return K.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def with_values(self, value) -> "RegressionTree":
        return RegressionTree(self.feature, self.threshold, self.left, self.right,
                              np.asarray(value, dtype=np.float64), self.weight, self.n_features)


def fit_tree(X, y, config: TreeConfig | None = None, seed: int = 0, sample_weight=None,
             presorted=None) -> RegressionTree:
    """Grow one CART regression tree.

    ``sample_weight`` holds non-negative integer-like multiplicities (bootstrap
    counts); zero-weight rows do not take part in the fit. ``presorted`` may
    carry a reusable column argsort of ``X`` (shape ``(d, n)``).
    """
    config = config or TreeConfig()
    X, y = _check_Xy(X, y)
    w = np.ones(len(y)) if sample_weight is None else np.ascontiguousarray(sample_weight, dtype=np.float64)
    if w.shape != y.shape or np.any(w < 0) or not np.any(w > 0):
        raise FitError("sample_weight must be non-negative with at least one positive entry")
    depth = -1 if config.max_depth is None else int(config.max_depth)
    n_sub = config.n_candidates(X.shape[1])
    seed = int(seed) % (2**32)
    if config.split_mode == "best":
        order = _presort(X) if presorted is None else presorted
        arrays = K.build_best(X, y, w, order, depth, float(config.min_samples_leaf), n_sub, seed)
    else:
        arrays = K.build_random(X, y, w, depth, float(config.min_samples_leaf), n_sub, seed)
    return RegressionTree(*arrays, n_features=X.shape[1])


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: str
    estimators: tuple
    weights: np.ndarray
    n_features: int
    seed: int = 0
    learning_rate: float = 1.0
    init: float = 0.0
    loss: LossSpec = field(default_factory=LossSpec)
    config: TreeConfig = field(default_factory=TreeConfig)
    train_loss: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown ensemble kind {self.kind!r}")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if len(self.weights) != len(self.estimators):
            raise ModelError("one weight per estimator required")
        if self.kind == "adaboost_r2" and np.any(self.weights <= 0):
            raise ModelError("AdaBoost estimator weights must be positive")

    @property
    def n_estimators(self) -> int:
        return len(self.estimators)

    @cached_property
    def _flat(self):
        offsets = np.cumsum([0] + [t.n_nodes for t in self.estimators])
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.estimators]) if self.estimators else np.zeros(0)
        feature = cat("feature").astype(np.int64)
        left = cat("left").astype(np.int64)
        right = cat("right").astype(np.int64)
        shift = np.repeat(offsets[:-1], [t.n_nodes for t in self.estimators])
        internal = feature >= 0
        left[internal] += shift[internal]
        right[internal] += shift[internal]
        return (feature, cat("threshold").astype(np.float64), left, right,
                cat("value").astype(np.float64), offsets[:-1].astype(np.int64))

    def _checked(self, X):
        X = _check_Xy(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} columns, got {X.shape[1]}")
        return X

    def predict_per_estimator(self, X) -> np.ndarray:
        """Matrix ``(n_rows, n_estimators)`` of raw tree outputs."""
        X = self._checked(X)
        if not self.estimators:
            return np.zeros((len(X), 0))
        return K.predict_forest(X, *self._flat)

    def predict(self, X) -> np.ndarray:
        P = self.predict_per_estimator(X)
        if self.kind in ("random_forest", "extra_trees"):
            return P.mean(axis=1)
        if self.kind == "gradient_boosting":
            return self.init + self.learning_rate * P.sum(axis=1)
        return weighted_quantile_rows(P, self.weights, 0.5)


def predict(model, X) -> np.ndarray:
    return model.predict(X)


def predict_per_estimator(model: EnsembleModel, X) -> np.ndarray:
    return model.predict_per_estimator(X)


def _fit_bagged(X, y, n_estimators, seed, config, bootstrap, n_jobs, kind):
    if n_estimators < 1:
        raise ConfigError(f"n_estimators must be >= 1, got {n_estimators}")
    X, y = _check_Xy(X, y)
    n = len(y)
    order = _presort(X) if config.split_mode == "best" else None
    children = np.random.SeedSequence(seed).spawn(n_estimators)

    def one(child):
        rng = np.random.default_rng(child)
        w = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64) if bootstrap else np.ones(n)
        tree_seed = int(rng.integers(0, 2**32))
        return fit_tree(X, y, config, tree_seed, sample_weight=w, presorted=order)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(one, children))
    else:
        trees = [one(c) for c in children]
    return EnsembleModel(kind, trees, np.ones(n_estimators), X.shape[1], seed=seed, config=config)


def fit_random_forest(X, y, n_estimators: int = 100, seed: int = 0, config: TreeConfig | None = None,
                      bootstrap: bool = True, n_jobs: int = 1) -> EnsembleModel:
    """Bagged best-split trees (unlimited depth, one sample per leaf by default)."""
    config = config or TreeConfig()
    if config.split_mode != "best":
        raise ConfigError("random forests use split_mode='best'")
    return _fit_bagged(X, y, n_estimators, seed, config, bootstrap, n_jobs, "random_forest")


def fit_extra_trees(X, y, n_estimators: int = 100, seed: int = 0, config: TreeConfig | None = None,
                    bootstrap: bool = False, n_jobs: int = 1) -> EnsembleModel:
    """Extremely randomized trees grown on the full sample."""
    config = config or TreeConfig(split_mode="random-threshold")
    if config.split_mode != "random-threshold":
        raise ConfigError("extra trees use split_mode='random-threshold'")
    return _fit_bagged(X, y, n_estimators, seed, config, bootstrap, n_jobs, "extra_trees")


def _loss_value(loss: LossSpec, y, F) -> float:
    if loss.kind == "squared":
        return float(np.mean((y - F) ** 2))
    return pinball_loss(loss.tau, y, F)


def fit_gradient_boosting(X, y, loss: LossSpec | None = None, n_estimators: int = 100,
                          learning_rate: float = 0.1, max_depth: int = 3, seed: int = 0) -> EnsembleModel:
    """Stagewise boosting of depth-limited trees on the negative loss gradient.

    Squared loss fits residuals. Pinball loss fits ``tau - 1{y < F}`` and then
    resets each leaf to the ``tau``-quantile of the residuals routed to it,
    which keeps the training loss non-increasing.
    """
    loss = loss or LossSpec()
    if n_estimators < 0:
        raise ConfigError("n_estimators must be >= 0")
    if not learning_rate > 0:
        raise ConfigError("learning_rate must be positive")
    X, y = _check_Xy(X, y)
    init = float(y.mean()) if loss.kind == "squared" else float(type1_quantile(y, loss.tau))
    F = np.full(len(y), init)
    config = TreeConfig(max_depth=max_depth)
    order = _presort(X)
    trace = [_loss_value(loss, y, F)]
    trees = []
    for tree_seed in _seed_ints(seed, n_estimators):
        if loss.kind == "squared":
            grad = y - F
        else:
            grad = loss.tau - (y < F).astype(np.float64)
        tree = fit_tree(X, grad, config, tree_seed, presorted=order)
        leaves = tree.apply(X)
        if loss.kind == "pinball":
            values = tree.value.copy()
            resid = y - F
            for leaf in np.unique(leaves):
                values[leaf] = type1_quantile(resid[leaves == leaf], loss.tau)
            tree = tree.with_values(values)
        F = F + learning_rate * tree.value[leaves]
        trees.append(tree)
        trace.append(_loss_value(loss, y, F))
    return EnsembleModel("gradient_boosting", trees, np.ones(len(trees)), X.shape[1], seed=seed,
                         learning_rate=learning_rate, init=init, loss=loss, config=config,
                         train_loss=tuple(trace))


def fit_adaboost_r2(X, y, n_estimators: int = 100, learning_rate: float = 0.1, max_depth: int = 3,
                    seed: int = 0) -> EnsembleModel:
    """AdaBoost.R2 with the linear loss; the forecast is the weighted median.

    Each round refits on a weighted bootstrap. A round with zero loss keeps
    its tree and stops; a round with average loss >= 0.5 is discarded (or kept
    alone if it is the first) and stops.
    """
    if n_estimators < 1:
        raise ConfigError(f"n_estimators must be >= 1, got {n_estimators}")
    if not learning_rate > 0:
        raise ConfigError("learning_rate must be positive")
    X, y = _check_Xy(X, y)
    n = len(y)
    config = TreeConfig(max_depth=max_depth)
    order = _presort(X)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    w = np.full(n, 1.0 / n)
    trees, est_weights = [], []
    for _ in range(n_estimators):
        counts = np.bincount(rng.choice(n, size=n, p=w), minlength=n).astype(np.float64)
        tree = fit_tree(X, y, config, int(rng.integers(0, 2**32)), sample_weight=counts, presorted=order)
        err = np.abs(y - tree.predict(X))
        err_max = err.max()
        if err_max == 0:
            trees.append(tree)
            est_weights.append(1.0)
            break
        L = err / err_max
        avg = float(np.sum(w * L))
        if avg <= 0:
            trees.append(tree)
            est_weights.append(1.0)
            break
        if avg >= 0.5:
            if not trees:
                trees.append(tree)
                est_weights.append(1.0)
            break
        beta = avg / (1.0 - avg)
        trees.append(tree)
        est_weights.append(learning_rate * math.log(1.0 / beta))
        w = w * np.power(beta, (1.0 - L) * learning_rate)
        w = w / w.sum()
    return EnsembleModel("adaboost_r2", trees, np.array(est_weights), X.shape[1], seed=seed,
                         learning_rate=learning_rate, config=config)


def save_model(model: EnsembleModel, path) -> None:
    """Write ``model`` as an ``.npz`` archive (see README, "Model dump format")."""
    feature, threshold, left, right, value, roots = model._flat
    node_weight = np.concatenate([t.weight for t in model.estimators]) if model.estimators else np.zeros(0)
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "n_features": model.n_features,
        "seed": model.seed,
        "learning_rate": model.learning_rate,
        "init": model.init,
        "loss": asdict(model.loss),
        "config": asdict(model.config),
        "train_loss": list(model.train_loss),
    }
    with Path(path).open("wb") as fh:
        np.savez_compressed(fh, meta=np.array(json.dumps(meta)), feature=feature, threshold=threshold,
                            left=left, right=right, value=value, node_weight=node_weight, roots=roots,
                            weights=model.weights)


def load_model(path) -> EnsembleModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelError(f"unsupported model format {meta.get('format_version')}")
        roots = z["roots"]
        bounds = list(roots) + [len(z["feature"])]
        trees = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            feature = z["feature"][a:b]
            internal = feature >= 0
            left = z["left"][a:b].copy()
            right = z["right"][a:b].copy()
            left[internal] -= a
            right[internal] -= a
            trees.append(RegressionTree(feature, z["threshold"][a:b], left, right, z["value"][a:b],
                                        z["node_weight"][a:b], meta["n_features"]))
        return EnsembleModel(
            meta["kind"], trees, z["weights"], meta["n_features"], seed=meta["seed"],
            learning_rate=meta["learning_rate"], init=meta["init"], loss=LossSpec(**meta["loss"]),
            config=TreeConfig(**meta["config"]), train_loss=tuple(meta["train_loss"]),
        )
