"""Four-class LSTM move classifier used as a comparison strategy.

The classifier predicts whether the next price difference moves up or down
by more than the transaction cost. It trades only on the "beyond cost"
classes and stays flat otherwise. It trains offline on a front split of the
data and is then evaluated frozen on the remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from holdq.errors import ConfigError, DataError
from holdq.market import PriceSeries, diff_series
from holdq.metrics import MetricsReport, evaluate
from holdq.netcore import NetDims, NetworkParams, apply_gradients, backward_batch, forward_batch, init_params


class MoveClass(IntEnum):
    UP_BEYOND_COST = 0
    UP_WITHIN_COST = 1
    DOWN_WITHIN_COST = 2
    DOWN_BEYOND_COST = 3


_CLASS_ACTION = np.array([1, 0, 0, -1])


@dataclass(frozen=True)
class ClassifierConfig:
    H: int = 32
    lstm_hidden: int = 32
    fc_hidden: int = 16
    lr: float = 0.05
    epochs: int = 20
    batch: int = 64
    seed: int = 0
    input_scale: float = 1.0
    train_frac: float = 0.5

    def __post_init__(self):
        if not 0 < self.train_frac < 1:
            raise ConfigError("train_frac must be in (0, 1)")
        if self.epochs < 1 or self.batch < 1 or not self.lr > 0:
            raise ConfigError("epochs, batch and lr must be positive")

    @property
    def dims(self) -> NetDims:
        return NetDims(self.H + 1, self.lstm_hidden, self.fc_hidden, 4)


@dataclass
class ClassifierFit:
    params: NetworkParams
    loss_history: list[float] = field(default_factory=list)
    train_accuracy: float = float("nan")


def label_moves(diffs, cost_c: float) -> list[MoveClass]:
    """Class of each difference; exact ties (0 or +/-c) fall into the WITHIN classes."""
    if cost_c < 0:
        raise ConfigError("cost_c must be >= 0")
    return [MoveClass(int(k)) for k in _label_array(np.asarray(diffs, dtype=np.float64), cost_c)]


def _label_array(d: np.ndarray, c: float) -> np.ndarray:
    out = np.full(d.shape, MoveClass.DOWN_WITHIN_COST, dtype=np.int64)
    out[d > 0] = MoveClass.UP_WITHIN_COST
    out[d > c] = MoveClass.UP_BEYOND_COST
    out[d < -c] = MoveClass.DOWN_BEYOND_COST
    return out


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _windows(feats: np.ndarray, H: int, first: int, last: int) -> np.ndarray:
    """Rows of H diffs ending at each index first..last inclusive."""
    view = np.lib.stride_tricks.sliding_window_view(feats, H)
    return view[first - H + 1:last - H + 2]


def _dataset(series: PriceSeries, cost_c: float, cfg: ClassifierConfig, first: int, last: int):
    diffs = diff_series(series)
    X = _windows(diffs * cfg.input_scale, cfg.H, first, last)
    y = _label_array(diffs[first + 1:last + 2], cost_c)
    return X, y


def cross_entropy_grad(params: NetworkParams, X, y):
    """Summed cross-entropy over the batch and its gradient."""
    logits, cache = forward_batch(params, X, np.zeros(len(X)), keep_cache=True)
    p = softmax(logits)
    rows = np.arange(len(y))
    loss = -np.sum(np.log(np.maximum(p[rows, y], 1e-300)))
    d_out = p
    d_out[rows, y] -= 1.0
    return loss, backward_batch(params, cache, d_out)


def predict_classes(params: NetworkParams, X) -> np.ndarray:
    logits = forward_batch(params, X, np.zeros(len(X)))
    return np.argmax(logits, axis=1)


def train_on_arrays(X, y, cfg: ClassifierConfig) -> ClassifierFit:
    """Minibatch SGD on softmax cross-entropy; deterministic per ``cfg.seed``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) < 1:
        raise DataError("no training samples")
    if len(y) != len(X) or X.ndim != 2 or X.shape[1] != cfg.H:
        raise DataError(f"expected X of shape (n, {cfg.H}) and n labels, got {X.shape} and {len(y)}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.dims, cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, grads = cross_entropy_grad(params, X[idx], y[idx])
            params = apply_gradients(params, grads, len(idx), cfg.lr)
            total += loss
        history.append(total / len(X))
    acc = float(np.mean(predict_classes(params, X) == y))
    return ClassifierFit(params, history, acc)


def split_index(series: PriceSeries, cfg: ClassifierConfig) -> int:
    """First evaluation decision index (diff index) for the front/back split."""
    n_diffs = len(series) - 1
    return max(cfg.H - 1, int(round(cfg.train_frac * n_diffs)))


def train_classifier(series: PriceSeries, cost_c: float, cfg: ClassifierConfig) -> ClassifierFit:
    """Fit on the front split of ``series`` (decisions before ``split_index``)."""
    split = split_index(series, cfg)
    if split - 1 < cfg.H - 1:
        raise DataError(f"training split too short for H={cfg.H}")
    X, y = _dataset(series, cost_c, cfg, cfg.H - 1, split - 1)
    return train_on_arrays(X, y, cfg)


def trade_from_classes(preds) -> list[int]:
    """UP_BEYOND -> long, DOWN_BEYOND -> short, WITHIN -> flat."""
    return [int(_CLASS_ACTION[int(MoveClass(int(p)))]) for p in preds]


@dataclass
class BaselineResult:
    fit: ClassifierFit
    first_step: int
    actions: list[int]
    prices: PriceSeries
    report: MetricsReport
    test_accuracy: float


def run_baseline(series: PriceSeries, cost_c: float, cfg: ClassifierConfig) -> BaselineResult:
    """Train on the front split, trade the back split with the frozen classifier."""
    fit = train_classifier(series, cost_c, cfg)
    n_diffs = len(series) - 1
    first = split_index(series, cfg)
    last = n_diffs - 2
    if last < first:
        raise DataError("evaluation split is empty")
    X, y = _dataset(series, cost_c, cfg, first, last)
    preds = predict_classes(fit.params, X)
    actions = trade_from_classes(preds)
    prices = series.slice(first + 1, last + 3)
    report = evaluate(actions, prices, cost_c)
    return BaselineResult(fit, first, actions, prices, report, float(np.mean(preds == y)))
