"""Deep multilayer perceptron for binary flow classification.

Architecture and training follow the pipeline's fixed recipe: Glorot-uniform
initialization, relu hidden layers, a single sigmoid output, class-weighted
logistic loss against the extreme normal/attack imbalance, and plain
mini-batch gradient descent driven by the three tuned hyperparameters
(batch size, epochs, learning rate).

Everything is float64 numpy; models are immutable once built, so inference
can run concurrently while training always works on a private copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .flow_data import FlowDataset

# Full-scale defaults: 13 input features, seven trained layers ending in one
# sigmoid unit, and a 4500:1 weight favoring the rare normal class.
DEFAULT_LAYER_SIZES = (13, 20, 40, 60, 80, 40, 10, 1)
DEFAULT_CLASS_WEIGHT_NORMAL = 4500.0
DEFAULT_CLASS_WEIGHT_ATTACK = 1.0

LOSS_EPS = 1e-7
_SIG_LO = np.finfo(np.float64).tiny
_SIG_HI = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"
    class_weight_normal: float = DEFAULT_CLASS_WEIGHT_NORMAL
    class_weight_attack: float = DEFAULT_CLASS_WEIGHT_ATTACK
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 3:
            raise ConfigError("need an input layer, at least one hidden layer, and an output")
        if any(s < 1 for s in self.layer_sizes):
            raise ConfigError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ConfigError("output layer must have exactly 1 unit")
        if self.hidden_activation != "relu":
            raise ConfigError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation != "sigmoid":
            raise ConfigError(f"unsupported output activation {self.output_activation!r}")
        if self.class_weight_normal <= 0 or self.class_weight_attack <= 0:
            raise ConfigError("class weights must be strictly positive")


@dataclass(frozen=True)
class Hyperparameters:
    """The three training knobs the swarm search tunes."""

    batch_size: int
    epochs: int
    learning_rate: float

    def __post_init__(self):
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs}")
        if not 0.0 < self.learning_rate < 1.0:
            raise ConfigError(
                f"learning_rate must be strictly between 0 and 1, got {self.learning_rate}"
            )
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "epochs", int(self.epochs))
        object.__setattr__(self, "learning_rate", float(self.learning_rate))


class MlpModel:
    """Weight matrices and biases, frozen after construction."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], config: MlpConfig):
        sizes = config.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ConfigError("parameter count does not match layer sizes")
        self.weights = []
        self.biases = []
        for k, (w, b) in enumerate(zip(weights, biases)):
            w = np.ascontiguousarray(w, dtype=np.float64)
            b = np.ascontiguousarray(b, dtype=np.float64)
            if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise ConfigError(
                    f"layer {k}: weight shape {w.shape} / bias shape {b.shape} "
                    f"do not match sizes {sizes[k]}->{sizes[k + 1]}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            self.weights.append(w)
            self.biases.append(b)
        self.config = config

    @property
    def input_size(self) -> int:
        return self.config.layer_sizes[0]

    def parameter_copies(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]


@dataclass
class Gradients:
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Numerically stable in both tails; output is clipped into the open unit
    # interval so scores are always strictly between 0 and 1.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _SIG_LO, _SIG_HI, out=out)


def init_model(config: MlpConfig) -> MlpModel:
    """Glorot-uniform weights in [-sqrt(6/(fan_in+fan_out)), +...], zero biases."""
    rng = np.random.default_rng(config.init_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.layer_sizes, config.layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, config)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def _forward_scores(weights, biases, x: np.ndarray) -> np.ndarray:
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
    z = a @ weights[-1] + biases[-1]
    return _sigmoid(z)[:, 0]


def forward(model: MlpModel, features) -> float:
    """Score one flow; relu hidden layers, sigmoid output in (0, 1)."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.input_size,):
        raise DataError(f"expected {model.input_size} features, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("input features must be finite")
    return float(_forward_scores(model.weights, model.biases, x[None, :])[0])


def predict_batch(model: MlpModel, dataset: FlowDataset) -> np.ndarray:
    """Scores for every record, in record order."""
    if dataset.n_features != model.input_size:
        raise DataError(
            f"model expects {model.input_size} features, dataset has {dataset.n_features}"
        )
    return _forward_scores(model.weights, model.biases, dataset.features)


def weighted_logistic_loss(labels, predictions, w0: float, w1: float) -> float:
    """Mean logistic cost with per-class weights (w0 normal, w1 attack).

    Predictions are clipped to [1e-7, 1 - 1e-7] before the logarithms so a
    saturated score cannot produce an infinite cost. With w0 = w1 = 1 this
    is the plain unweighted logistic cost.
    """
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if y.shape != p.shape:
        raise DataError(f"{y.shape[0]} labels for {p.shape[0]} predictions")
    if y.size == 0:
        raise DataError("loss over empty input")
    if w0 <= 0 or w1 <= 0:
        raise ConfigError("class weights must be strictly positive")
    p = np.clip(p, LOSS_EPS, 1.0 - LOSS_EPS)
    return float(-np.mean(w1 * y * np.log(p) + w0 * (1.0 - y) * np.log(1.0 - p)))


def _backprop(weights, biases, x: np.ndarray, y: np.ndarray, w0: float, w1: float):
    """Analytic gradient of the weighted logistic loss for one batch.

    The relu subgradient at 0 is taken as 0. The loss-side clipping is
    inactive wherever the loss is differentiable, so this is the exact
    gradient everywhere the finite-difference oracle can probe it.
    """
    m = x.shape[0]
    activations = [x]
    pre = []
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    z_out = a @ weights[-1] + biases[-1]
    y_hat = _sigmoid(z_out)[:, 0]

    # dC/dz at the sigmoid output: (w0 (1-y) yhat - w1 y (1-yhat)) / m
    delta = ((w0 * (1.0 - y) * y_hat - w1 * y * (1.0 - y_hat)) / m)[:, None]
    grad_w = [np.empty(0)] * len(weights)
    grad_b = [np.empty(0)] * len(biases)
    for k in range(len(weights) - 1, -1, -1):
        grad_w[k] = activations[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ weights[k].T) * (pre[k - 1] > 0.0)
    return grad_w, grad_b


def gradients(model: MlpModel, batch_features, batch_labels) -> Gradients:
    """Gradient of the weighted logistic loss w.r.t. every weight and bias."""
    x = np.asarray(batch_features, dtype=np.float64)
    y = np.asarray(batch_labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_size:
        raise DataError(f"batch features must be (m, {model.input_size}), got {x.shape}")
    if y.shape != (x.shape[0],):
        raise DataError(f"batch labels shape {y.shape} does not match {x.shape[0]} rows")
    if x.shape[0] == 0:
        raise DataError("gradient over an empty batch")
    gw, gb = _backprop(
        model.weights,
        model.biases,
        x,
        y,
        model.config.class_weight_normal,
        model.config.class_weight_attack,
    )
    return Gradients(weights=gw, biases=gb)


def _canonical_order(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # Sort records lexicographically by feature values, label as tiebreak,
    # so the trained result depends on the data multiset, not storage order.
    keys = [labels] + [features[:, j] for j in range(features.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def train(
    model: MlpModel,
    train_set: FlowDataset,
    hp: Hyperparameters,
    shuffle_seed: int,
) -> tuple[MlpModel, list[float]]:
    """Mini-batch gradient descent; returns the trained model and loss trace.

    Runs `hp.epochs` full passes. Each epoch reshuffles deterministically
    under `shuffle_seed`, partitions into batches of `hp.batch_size` (the
    final short batch is kept), and applies theta <- theta - lr * grad.
    The trace holds the full-train-set loss before training and after each
    epoch. Training aborts with a diagnostic on a non-finite loss.
    """
    if train_set.normalization is None:
        raise DataError("training data must be normalized first")
    if train_set.n_features != model.input_size:
        raise DataError(
            f"model expects {model.input_size} features, dataset has {train_set.n_features}"
        )
    n = len(train_set)
    if hp.batch_size > n:
        raise DataError(f"batch_size {hp.batch_size} exceeds dataset size {n}")

    order = _canonical_order(train_set.features, train_set.labels)
    x_all = np.ascontiguousarray(train_set.features[order])
    y_all = train_set.labels[order].astype(np.float64)

    weights, biases = model.parameter_copies()
    w0 = model.config.class_weight_normal
    w1 = model.config.class_weight_attack
    lr = hp.learning_rate

    def full_loss() -> float:
        return weighted_logistic_loss(y_all, _forward_scores(weights, biases, x_all), w0, w1)

    losses = [full_loss()]
    rng = np.random.default_rng(shuffle_seed)
    for epoch in range(hp.epochs):
        perm = rng.permutation(n)
        x_epoch = x_all[perm]
        y_epoch = y_all[perm]
        for start in range(0, n, hp.batch_size):
            stop = start + hp.batch_size
            gw, gb = _backprop(weights, biases, x_epoch[start:stop], y_epoch[start:stop], w0, w1)
            for k in range(len(weights)):
                weights[k] -= lr * gw[k]
                biases[k] -= lr * gb[k]
        loss = full_loss()
        if not math.isfinite(loss):
            raise NumericError(
                f"non-finite training loss {loss!r} after epoch {epoch + 1} "
                f"(batch_size={hp.batch_size}, learning_rate={hp.learning_rate})"
            )
        losses.append(loss)
    return MlpModel(weights, biases, model.config), losses


def save_model(model: MlpModel, path: str | Path) -> None:
    """Self-describing decimal-text persistence; exact float64 round-trip."""
    lines = ["swarmflow-mlp 1"]
    cfg = model.config
    lines.append("layers " + " ".join(str(s) for s in cfg.layer_sizes))
    lines.append(f"hidden_activation {cfg.hidden_activation}")
    lines.append(f"output_activation {cfg.output_activation}")
    lines.append(f"class_weight_normal {cfg.class_weight_normal!r}")
    lines.append(f"class_weight_attack {cfg.class_weight_attack!r}")
    lines.append(f"init_seed {cfg.init_seed}")
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"weights {k} {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(f"biases {k} {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MlpModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("swarmflow-mlp"):
        raise DataError(f"{path}: not a swarmflow model file")
    fields: dict[str, str] = {}
    idx = 1
    while idx < len(lines) and not lines[idx].startswith("weights "):
        key, _, value = lines[idx].partition(" ")
        fields[key] = value
        idx += 1
    try:
        sizes = tuple(int(s) for s in fields["layers"].split())
        config = MlpConfig(
            layer_sizes=sizes,
            hidden_activation=fields["hidden_activation"],
            output_activation=fields["output_activation"],
            class_weight_normal=float(fields["class_weight_normal"]),
            class_weight_attack=float(fields["class_weight_attack"]),
            init_seed=int(fields["init_seed"]),
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing model header field {exc}") from exc

    weights, biases = [], []
    for k in range(len(sizes) - 1):
        header = lines[idx].split()
        if header[:2] != ["weights", str(k)]:
            raise DataError(f"{path}: malformed weights block at layer {k}")
        rows, cols = int(header[2]), int(header[3])
        idx += 1
        w = np.array(
            [[float(v) for v in lines[idx + r].split()] for r in range(rows)], dtype=np.float64
        )
        if w.shape != (rows, cols):
            raise DataError(f"{path}: weight block {k} has wrong shape")
        idx += rows
        header = lines[idx].split()
        if header[:2] != ["biases", str(k)]:
            raise DataError(f"{path}: malformed biases block at layer {k}")
        idx += 1
        b = np.array([float(v) for v in lines[idx].split()], dtype=np.float64)
        idx += 1
        weights.append(w)
        biases.append(b)
    return MlpModel(weights, biases, config)
