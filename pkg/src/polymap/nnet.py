"""Dense feed-forward softmax classifiers and their SGD training loop.

Hidden layers use ReLU; the output layer is a softmax over the label
inventory.  Weights are initialized from a seeded uniform distribution
scaled by 1/sqrt(fan-in) with zero biases, so a (layer_dims, seed) pair
fully determines the starting point and training is reproducible end to
end.  Cross-entropy is evaluated in log-sum-exp form so it stays finite
for extreme logits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._npz import read_npz, write_npz
from .data import FrameSet
from .errors import (
    ConfigError,
    EmptyDataError,
    InvalidArchitectureError,
    LabelRangeError,
    RangeError,
    ShapeError,
)

_MODEL_FORMAT = "polymap-network"


@dataclass
class Network:
    """A dense classifier: ReLU hidden layers, softmax output.

    ``weights[k]`` has shape ``(layer_dims[k+1], layer_dims[k])`` and
    ``biases[k]`` has length ``layer_dims[k+1]``.  Instances are treated
    as immutable once trained; :func:`train` returns a new network.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "Network":
        return Network(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.seed,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the SGD schedule.

    The learning rate starts at ``initial_lr`` and is halved after every
    epoch when ``halve_every_epoch`` is set.
    """

    initial_lr: float = 0.08
    epochs: int = 16
    batch_size: int = 32
    shuffle_seed: int = 0
    halve_every_epoch: bool = True

    def __post_init__(self) -> None:
        if self.initial_lr <= 0:
            raise ConfigError(f"initial_lr must be positive, got {self.initial_lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochStats:
    """One training-log line: epoch index, learning rate, mean loss."""

    epoch: int
    lr: float
    mean_loss: float


def init_network(layer_dims: list[int], seed: int = 0) -> Network:
    """Deterministically initialize a network for the given layer sizes."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise InvalidArchitectureError(f"need at least input and output layers, got {dims}")
    if any(d < 1 for d in dims):
        raise InvalidArchitectureError(f"all layer dims must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(dims, weights, biases, activation="relu", seed=int(seed))


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax of a 2-d logit array."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def hidden_forward(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Apply a stack of affine+ReLU layers to a batch.

    Shared between plain and multi-head networks so that a pruned head
    reproduces the multi-head arithmetic bit for bit.
    """
    h = x
    for w, b in zip(weights, biases):
        h = relu(h @ w.T + b)
    return h


def forward_batch(net: Network, x: np.ndarray) -> np.ndarray:
    """Posterior probabilities for a batch of feature rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"expected features of shape (n, {net.input_dim}), got {x.shape}")
    h = hidden_forward(net.weights[:-1], net.biases[:-1], x)
    return softmax(h @ net.weights[-1].T + net.biases[-1])


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Posterior probabilities for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-d feature vector, got shape {x.shape}")
    return forward_batch(net, x[None, :])[0]


def predict_batch(net: Network, x: np.ndarray) -> np.ndarray:
    """Argmax labels for a batch; ties break toward the lowest label id."""
    return np.argmax(forward_batch(net, x), axis=1).astype(np.int64)


def predict(net: Network, x: np.ndarray) -> int:
    return int(np.argmax(forward(net, x)))


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate in force during a 0-based epoch."""
    if not 0 <= epoch < cfg.epochs:
        raise RangeError(f"epoch {epoch} outside 0..{cfg.epochs - 1}")
    if cfg.halve_every_epoch:
        return cfg.initial_lr / 2.0**epoch
    return cfg.initial_lr


def _forward_backward(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Summed cross-entropy over the batch and its gradients."""
    acts = [x]
    for w, b in zip(weights[:-1], biases[:-1]):
        acts.append(relu(acts[-1] @ w.T + b))
    logits = acts[-1] @ weights[-1].T + biases[-1]

    zmax = logits.max(axis=1, keepdims=True)
    shifted = logits - zmax
    exp = np.exp(shifted)
    norm = exp.sum(axis=1, keepdims=True)
    rows = np.arange(x.shape[0])
    losses = np.log(norm[:, 0]) - shifted[rows, y]

    delta = exp / norm
    delta[rows, y] -= 1.0
    grads_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        grads_w[k] = delta.T @ acts[k]
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ weights[k]) * (acts[k] > 0.0)
    return float(losses.sum()), grads_w, grads_b


def loss_and_gradients(
    net: Network, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy over (x, y) and its gradient w.r.t. every parameter."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_labeled_batch(net, x, y)
    loss_sum, grads_w, grads_b = _forward_backward(net.weights, net.biases, x, y)
    n = x.shape[0]
    return loss_sum / n, [g / n for g in grads_w], [g / n for g in grads_b]


def _check_labeled_batch(net: Network, x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[0] == 0:
        raise EmptyDataError("no frames to train on")
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"expected features of shape (n, {net.input_dim}), got {x.shape}")
    if y.min() < 0 or y.max() >= net.output_dim:
        raise LabelRangeError(
            f"labels must lie in 0..{net.output_dim - 1}, got range "
            f"[{int(y.min())}, {int(y.max())}]"
        )


def train(net: Network, frames: FrameSet, cfg: TrainConfig) -> tuple[Network, list[EpochStats]]:
    """Shuffled mini-batch SGD on cross-entropy; returns a new network.

    Deterministic for a fixed (net, frames, cfg): the shuffle order is
    drawn from ``cfg.shuffle_seed`` alone.
    """
    x = frames.features
    y = frames.labels
    _check_labeled_batch(net, x, y)

    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(frames)
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(n)
        loss_total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss_sum, grads_w, grads_b = _forward_backward(weights, biases, x[idx], y[idx])
            scale = lr / idx.size
            for k in range(len(weights)):
                weights[k] -= scale * grads_w[k]
                biases[k] -= scale * grads_b[k]
            loss_total += loss_sum
        history.append(EpochStats(epoch=epoch, lr=lr, mean_loss=loss_total / n))
    trained = Network(list(net.layer_dims), weights, biases, net.activation, net.seed)
    return trained, history


def finetune(
    net: Network,
    frames: FrameSet,
    epochs: int = 5,
    lr: float = 0.0008,
    batch_size: int = 32,
    shuffle_seed: int = 0,
) -> tuple[Network, list[EpochStats]]:
    """Continue training at a constant learning rate (no halving).

    ``epochs=0`` is a no-op that returns an unchanged copy.
    """
    if epochs < 0:
        raise RangeError(f"epochs must be >= 0, got {epochs}")
    if epochs == 0:
        return net.copy(), []
    cfg = TrainConfig(
        initial_lr=lr,
        epochs=epochs,
        batch_size=batch_size,
        shuffle_seed=shuffle_seed,
        halve_every_epoch=False,
    )
    return train(net, frames, cfg)


def save_network(net: Network, path: str | Path) -> None:
    """Write a self-describing model file; loading reproduces forward
    outputs bit for bit."""
    meta = {
        "format": _MODEL_FORMAT,
        "version": 1,
        "activation": net.activation,
        "seed": net.seed,
    }
    arrays: dict[str, np.ndarray] = {
        "meta": np.array(json.dumps(meta, sort_keys=True)),
        "layer_dims": np.asarray(net.layer_dims, dtype=np.int64),
    }
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"weight_{k}"] = w
        arrays[f"bias_{k}"] = b
    write_npz(path, arrays)


def load_network(path: str | Path) -> Network:
    arrays = read_npz(path)
    try:
        meta = json.loads(str(arrays["meta"][()]))
    except KeyError as exc:
        raise ShapeError(f"{path} is not a model file (missing metadata)") from exc
    if meta.get("format") != _MODEL_FORMAT:
        raise ShapeError(f"{path} is not a {_MODEL_FORMAT} file")
    dims = [int(d) for d in arrays["layer_dims"]]
    weights = [arrays[f"weight_{k}"] for k in range(len(dims) - 1)]
    biases = [arrays[f"bias_{k}"] for k in range(len(dims) - 1)]
    return Network(dims, weights, biases, meta["activation"], int(meta["seed"]))
