"""Small fully-connected regressor in plain numpy.

ReLU hidden layers with inverted dropout after each, trained with Adam on
minibatches. The ``scalar`` head is fit with mean squared error; the
``gaussian`` head emits ``(mu, log sigma^2)`` and is fit with the Gaussian
negative log-likelihood ``0.5 * (log sigma^2 + (y - mu)^2 / sigma^2)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateSamplingError, ShapeError, TrainingError

HEADS = ("scalar", "gaussian")


@dataclass(frozen=True)
class MLPConfig:
    hidden_sizes: tuple = (50,)
    activation: str = "relu"
    epochs: int = 20
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    dropout_rate: float = 0.2
    output_head: str = "scalar"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.output_head not in HEADS:
            raise ConfigError(f"output_head must be one of {HEADS}")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("hidden_sizes must be non-empty positive integers")

    @property
    def n_outputs(self) -> int:
        return 2 if self.output_head == "gaussian" else 1


@dataclass(eq=False)
class MLPModel:
    params: list
    config: MLPConfig
    loss_trace: tuple = field(default_factory=tuple)

    @property
    def n_features(self) -> int:
        return self.params[0].shape[0]

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} columns, got {X.shape[1]}")
        return X

    def forward(self, X, rng=None) -> np.ndarray:
        """Raw head output ``(n, n_outputs)``; dropout is active iff ``rng`` is given."""
        X = self._check(X)
        masks = _draw_masks(self, len(X), rng) if rng is not None else None
        return _forward(self.params, X, masks)[0]

    def predict(self, X) -> np.ndarray:
        return self.forward(X)[:, 0]

    def predict_gaussian(self, X):
        """``(mu, sigma)`` in the units the model was trained on."""
        if self.config.output_head != "gaussian":
            raise ConfigError("predict_gaussian needs a gaussian-head model")
        out = self.forward(X)
        return out[:, 0], np.exp(0.5 * out[:, 1])


def init_params(n_features: int, config: MLPConfig, rng) -> list:
    params = []
    fan_in = n_features
    for h in config.hidden_sizes:
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, h)))
        params.append(np.zeros(h))
        fan_in = h
    W = np.zeros((fan_in, config.n_outputs))
    # log-variance column starts at exactly zero (sigma = 1)
    W[:, 0] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=fan_in)
    params.append(W)
    params.append(np.zeros(config.n_outputs))
    return params


def _draw_masks(model, n, rng):
    p = model.config.dropout_rate
    if p == 0:
        return None
    keep = 1.0 - p
    return [(rng.random((n, h)) < keep) / keep for h in model.config.hidden_sizes]


def _forward(params, X, masks):
    acts = [X]
    pre = []
    h = X
    n_hidden = len(params) // 2 - 1
    for layer in range(n_hidden):
        z = h @ params[2 * layer] + params[2 * layer + 1]
        pre.append(z)
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[layer]
        acts.append(h)
    out = h @ params[-2] + params[-1]
    return out, (acts, pre, masks)


def _backward(params, cache, dout):
    acts, pre, masks = cache
    grads = [None] * len(params)
    grads[-2] = acts[-1].T @ dout
    grads[-1] = dout.sum(axis=0)
    delta = dout @ params[-2].T
    for layer in reversed(range(len(pre))):
        if masks is not None:
            delta = delta * masks[layer]
        delta = delta * (pre[layer] > 0)
        grads[2 * layer] = acts[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = delta @ params[2 * layer].T
    return grads


def _loss(head, out, y):
    B = len(y)
    mu = out[:, 0]
    r = mu - y
    dout = np.zeros_like(out)
    if head == "scalar":
        dout[:, 0] = 2.0 * r / B
        return float(np.mean(r * r)), dout
    s = out[:, 1]
    inv = np.exp(-s)
    loss = float(np.mean(0.5 * (s + r * r * inv)))
    dout[:, 0] = r * inv / B
    dout[:, 1] = 0.5 * (1.0 - r * r * inv) / B
    return loss, dout


def loss_and_gradients(model: MLPModel, X, y, head: str | None = None):
    """Deterministic (no dropout) loss and its gradient w.r.t. every parameter."""
    X = model._check(X)
    y = np.asarray(y, dtype=np.float64)
    out, cache = _forward(model.params, X, None)
    loss, dout = _loss(head or model.config.output_head, out, y)
    return loss, _backward(model.params, cache, dout)


def gradient_check(model: MLPModel, X, y, loss: str | None = None, step: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The gap for one entry is ``|a - n| / max(|a| + |n|, 1e-6)``.
    """
    head = loss or model.config.output_head
    if head == "mse":
        head = "scalar"
    elif head == "nll":
        head = "gaussian"
    _, grads = loss_and_gradients(model, X, y, head)
    X = model._check(X)
    y = np.asarray(y, dtype=np.float64)
    worst = 0.0
    for P, G in zip(model.params, grads):
        flat = P.reshape(-1)
        gflat = G.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = _loss(head, _forward(model.params, X, None)[0], y)[0]
            flat[j] = orig - step
            down = _loss(head, _forward(model.params, X, None)[0], y)[0]
            flat[j] = orig
            num = (up - down) / (2.0 * step)
            gap = abs(gflat[j] - num) / max(abs(gflat[j]) + abs(num), 1e-6)
            worst = max(worst, gap)
    return worst


def fit_mlp(X, y, config: MLPConfig | None = None) -> MLPModel:
    """Train on (already standardized) ``X``, ``y``; deterministic per ``config.seed``.

    The loss trace holds the full-data, dropout-free loss after each epoch.
    """
    config = config or MLPConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or len(X) != len(y) or len(y) == 0:
        raise ShapeError("fit_mlp needs a non-empty 2-D X and matching 1-D y")
    rng = np.random.default_rng(config.seed)
    model = MLPModel(init_params(X.shape[1], config, rng), config)
    m = [np.zeros_like(p) for p in model.params]
    v = [np.zeros_like(p) for p in model.params]
    b1, b2 = config.beta1, config.beta2
    t = 0
    trace = []
    n = len(y)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, yb = X[idx], y[idx]
            masks = _draw_masks(model, len(idx), rng)
            out, cache = _forward(model.params, xb, masks)
            batch_loss, dout = _loss(config.output_head, out, yb)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite training loss in epoch {epoch}", epoch=epoch)
            grads = _backward(model.params, cache, dout)
            t += 1
            c1 = 1.0 - b1 ** t
            c2 = 1.0 - b2 ** t
            for P, G, M, S in zip(model.params, grads, m, v):
                M *= b1
                M += (1.0 - b1) * G
                S *= b2
                S += (1.0 - b2) * G * G
                P -= config.learning_rate * (M / c1) / (np.sqrt(S / c2) + config.eps)
        epoch_loss = _loss(config.output_head, _forward(model.params, X, None)[0], y)[0]
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite training loss in epoch {epoch}", epoch=epoch)
        trace.append(epoch_loss)
    model.loss_trace = tuple(trace)
    return model


def mc_dropout_samples(model: MLPModel, X, n_passes: int = 100, seed: int = 0) -> np.ndarray:
    """``(n_passes, n_rows)`` stochastic forecasts with dropout left on."""
    if model.config.dropout_rate == 0:
        raise DegenerateSamplingError("dropout rate is 0: every pass would be identical")
    if n_passes < 1:
        raise ConfigError("n_passes must be >= 1")
    X = model._check(X)
    rng = np.random.default_rng(seed)
    return np.stack([model.forward(X, rng)[:, 0] for _ in range(n_passes)])


def export_loss_trace(model: MLPModel, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(model.loss_trace, 1):
            writer.writerow([epoch, repr(float(loss))])
