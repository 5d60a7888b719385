"""A small numpy MLP classifier and the SGD training protocol.

The training loop mirrors the usual deep-learning recipe: shuffled
mini-batches, global gradient-norm clipping, L2 weight decay folded into the
gradient, heavy-ball momentum, and a per-epoch learning-rate schedule.  The
score vector can be normalised before the loss, either to unit Euclidean
norm or by per-coordinate batch statistics.  Normalisation keeps
negatively unbounded losses such as the unhinged loss from diverging.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import LabeledDataset
from .losses import LossFunction, make_loss
from .numerics import DEFAULT_NORM_EPS, InvalidArgumentError, make_rng

__all__ = [
    "MlpModel",
    "ScoreNorm",
    "TrainConfig",
    "TrainRecord",
    "TrainingAborted",
    "backward",
    "evaluate_accuracy",
    "forward",
    "get_norm_stats",
    "init_mlp",
    "learning_rate",
    "train",
]

RECORD_SCHEMA_VERSION = "symloss.train_record/1"

# Losses that are unbounded below and were trained on normalised scores.
_NORMALISED_BY_DEFAULT = ("unhinged", "sgce", "alpha_mae")


class TrainingAborted(RuntimeError):
    """Raised when the loss becomes non-finite; ``record`` holds the epochs so far."""

    def __init__(self, message: str, record: "TrainRecord"):
        super().__init__(message)
        self.record = record


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

_ACTIVATIONS = ("relu", "tanh", "identity")


def _act(name, h):
    if name == "relu":
        return np.maximum(h, 0.0)
    if name == "tanh":
        return np.tanh(h)
    return h


def _act_grad(name, h, a):
    if name == "relu":
        return (h > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(h)


@dataclass(eq=False)
class MlpModel:
    """Fully connected network ``d -> h1 -> ... -> C``.

    ``weights[l]`` has shape ``(out, in)``.  ``biases`` is ``None`` for a
    bias-free network.  The activation is applied between layers, never
    after the last one.
    """

    layer_dims: tuple
    weights: list
    biases: list | None = None
    activation: str = "relu"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2:
            raise InvalidArgumentError("need at least input and output dimensions")
        if self.activation not in _ACTIVATIONS:
            raise InvalidArgumentError(f"activation must be one of {_ACTIVATIONS}")
        self.weights = [np.array(W, dtype=np.float64) for W in self.weights]
        if len(self.weights) != len(self.layer_dims) - 1:
            raise InvalidArgumentError("one weight matrix per layer expected")
        for W, d_in, d_out in zip(self.weights, self.layer_dims[:-1], self.layer_dims[1:]):
            if W.shape != (d_out, d_in):
                raise InvalidArgumentError(f"weight shape {W.shape} does not match ({d_out}, {d_in})")
        if self.biases is not None:
            self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
            for b, d_out in zip(self.biases, self.layer_dims[1:]):
                if b.shape != (d_out,):
                    raise InvalidArgumentError("bias shapes do not match layer_dims")

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved, ``[W0, b0, W1, b1, ...]``; live references."""
        out = []
        for i, W in enumerate(self.weights):
            out.append(W)
            if self.biases is not None:
                out.append(self.biases[i])
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_dims,
            [W.copy() for W in self.weights],
            None if self.biases is None else [b.copy() for b in self.biases],
            self.activation,
        )

    def _forward_cache(self, X):
        pre, post = [], [X]
        a = X
        last = len(self.weights) - 1
        for i, W in enumerate(self.weights):
            h = a @ W.T
            if self.biases is not None:
                h = h + self.biases[i]
            pre.append(h)
            a = h if i == last else _act(self.activation, h)
            post.append(a)
        return pre, post

    def forward(self, x) -> np.ndarray:
        return forward(self, x)


def init_mlp(layer_dims, activation: str = "relu", *, bias: bool = True, seed: int = 0) -> MlpModel:
    """Glorot-uniform weights (limit ``sqrt(6 / (fan_in + fan_out))``), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    weights = []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = math.sqrt(6.0 / (d_in + d_out))
        weights.append(make_rng(seed, 0x1417, i).uniform(-limit, limit, size=(d_out, d_in)))
    biases = [np.zeros(d) for d in dims[1:]] if bias else None
    return MlpModel(dims, weights, biases, activation)


def forward(model: MlpModel, x) -> np.ndarray:
    """Scores for one input ``(d,)`` or a batch ``(n, d)``."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.ndim != 2 or X2.shape[1] != model.layer_dims[0]:
        raise InvalidArgumentError(f"input dimension {X2.shape[-1]} != {model.layer_dims[0]}")
    _, post = model._forward_cache(X2)
    return post[-1][0] if single else post[-1]


def get_norm_stats(model: MlpModel) -> tuple[int, float]:
    """Layer count and the product of per-layer weight norms.

    The Frobenius norm stands in for the spectral norm; it is an upper
    bound, so the product bounds how much the network can stretch inputs.
    """
    r = 1.0
    for W in model.weights:
        r *= float(np.linalg.norm(W))
    return len(model.weights), r


# ---------------------------------------------------------------------------
# score normalisation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ScoreNorm:
    """``none``, ``euclidean`` (``z / max(||z||, eps)``) or ``batch_stats``.

    ``batch_stats`` standardises every score coordinate with the mini-batch
    mean and (biased) variance, with no learned scale or shift.  Running
    estimates (momentum 0.1, unbiased variance) are used at evaluation time.
    """

    kind: str = "none"
    eps: float = DEFAULT_NORM_EPS
    momentum: float = 0.1
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "euclidean", "batch_stats"):
            raise InvalidArgumentError(f"unknown score normalisation {self.kind!r}")
        if not self.eps > 0:
            raise InvalidArgumentError("eps must be positive")

    def forward(self, Z: np.ndarray, training: bool = False):
        if self.kind == "none":
            return Z, None
        if self.kind == "euclidean":
            raw = np.sqrt((Z * Z).sum(axis=1, keepdims=True))
            n = np.maximum(raw, self.eps)
            U = Z / n
            return U, (U, n, raw > self.eps)
        C = Z.shape[1]
        if self.running_mean is None:
            self.running_mean = np.zeros(C)
            self.running_var = np.ones(C)
        if not training:
            return (Z - self.running_mean) / np.sqrt(self.running_var + self.eps), None
        m = Z.shape[0]
        mean = Z.mean(axis=0)
        var = Z.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.eps)
        U = (Z - mean) * inv
        unbiased = var * m / (m - 1) if m > 1 else var
        self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
        self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        return U, (U, inv)

    def backward(self, dU: np.ndarray, cache) -> np.ndarray:
        if self.kind == "none":
            return dU
        if self.kind == "euclidean":
            U, n, inside = cache
            proj = dU - U * (U * dU).sum(axis=1, keepdims=True)
            return np.where(inside, proj, dU) / n
        if cache is None:
            raise InvalidArgumentError("batch_stats backward needs a training-mode forward")
        U, inv = cache
        return inv * (dU - dU.mean(axis=0) - U * (dU * U).mean(axis=0))

    def copy(self) -> "ScoreNorm":
        return ScoreNorm(
            self.kind, self.eps, self.momentum,
            None if self.running_mean is None else self.running_mean.copy(),
            None if self.running_var is None else self.running_var.copy(),
        )


def _as_norm(score_norm) -> ScoreNorm:
    if score_norm is None:
        return ScoreNorm("none")
    if isinstance(score_norm, str):
        return ScoreNorm(score_norm)
    return score_norm


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def backward(model: MlpModel, x, y, loss: LossFunction, score_norm=None, *, training: bool = True):
    """Mean loss over the batch and its gradient for every parameter.

    Returns ``(mean_loss, grads)`` with ``grads`` aligned to
    ``model.parameters()``.  A single example may be passed as ``(d,)`` and an
    integer label.
    """
    norm = _as_norm(score_norm)
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    n = X.shape[0]
    pre, post = model._forward_cache(X)
    U, cache = norm.forward(post[-1], training=training)
    values = loss.value(U, Y)
    dH = norm.backward(loss.gradient(U, Y) / n, cache)
    grads_w, grads_b = [], []
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w.append(dH.T @ post[i])
        grads_b.append(dH.sum(axis=0))
        if i > 0:
            dA = dH @ model.weights[i]
            dH = dA * _act_grad(model.activation, pre[i - 1], post[i])
    grads_w.reverse()
    grads_b.reverse()
    grads = []
    for i in range(len(model.weights)):
        grads.append(grads_w[i])
        if model.biases is not None:
            grads.append(grads_b[i])
    return float(np.mean(values)), grads


def evaluate_accuracy(model: MlpModel, data: LabeledDataset, score_norm=None, *, batch: int = 4096) -> float:
    """Fraction of examples whose argmax score equals the label (ties go to the lowest index)."""
    norm = _as_norm(score_norm)
    correct = 0
    for start in range(0, len(data), batch):
        Z = forward(model, data.features[start:start + batch])
        U, _ = norm.forward(Z, training=False)
        correct += int((np.argmax(U, axis=1) == data.labels[start:start + batch]).sum())
    return correct / len(data)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Optimiser and protocol settings; defaults follow the CIFAR-10 column of the SGCE setup."""

    epochs: int = 120
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-3
    grad_clip: float = 5.0
    schedule: str = "cosine"
    T_max: int | None = None
    eta_min: float = 0.0
    step_size: int = 30
    gamma: float = 0.1
    score_norm: str = "auto"
    norm_eps: float = DEFAULT_NORM_EPS
    seed: int = 0
    loss_name: str = "ce"
    loss_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr > 0:
            raise InvalidArgumentError("lr must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidArgumentError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidArgumentError("weight_decay must be non-negative")
        if not self.grad_clip > 0:
            raise InvalidArgumentError("grad_clip must be positive")
        if self.schedule not in ("cosine", "step", "constant"):
            raise InvalidArgumentError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "step" and self.step_size < 1:
            raise InvalidArgumentError("step_size must be >= 1")
        if self.score_norm not in ("auto", "none", "euclidean", "batch_stats"):
            raise InvalidArgumentError(f"unknown score_norm {self.score_norm!r}")

    def resolved_score_norm(self) -> str:
        if self.score_norm != "auto":
            return self.score_norm
        base = self.loss_name.lower()
        return "euclidean" if base in _NORMALISED_BY_DEFAULT or base.startswith("sym_") else "none"


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    if cfg.schedule == "constant":
        return cfg.lr
    if cfg.schedule == "step":
        return cfg.lr * cfg.gamma ** (epoch // cfg.step_size)
    t_max = cfg.T_max if cfg.T_max else max(cfg.epochs, 1)
    return cfg.eta_min + (cfg.lr - cfg.eta_min) * (1 + math.cos(math.pi * epoch / t_max)) / 2


@dataclass
class TrainRecord:
    config: dict
    seed: int
    epochs: list = field(default_factory=list)
    aborted: bool = False

    def to_dict(self) -> dict:
        return {
            "schema": RECORD_SCHEMA_VERSION,
            "config": self.config,
            "seed": self.seed,
            "aborted": self.aborted,
            "epochs": self.epochs,
            "final_test_accuracy": self.final_test_accuracy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)

    @property
    def final_test_accuracy(self) -> float | None:
        return self.epochs[-1]["test_accuracy"] if self.epochs else None


def _global_norm(grads) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads))


def _clip(grads, max_norm, total=None):
    if total is None:
        total = _global_norm(grads)
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        grads = [g * scale for g in grads]
        total = _global_norm(grads)
    return grads, total


def train(
    model: MlpModel,
    train_data: LabeledDataset,
    test_data: LabeledDataset,
    cfg: TrainConfig,
    loss: LossFunction | None = None,
    score_norm: ScoreNorm | None = None,
) -> TrainRecord:
    """Train ``model`` in place and return the per-epoch record.

    Per step: clip the loss gradient to global norm ``grad_clip``, add
    ``weight_decay * param`` (biases included), update the momentum buffer
    ``v = momentum * v + g``, then ``param -= lr * v``.  The batch order of
    epoch ``t`` comes from ``make_rng(seed, t)``.
    """
    if train_data.dim != model.layer_dims[0] or test_data.dim != model.layer_dims[0]:
        raise InvalidArgumentError("dataset feature dimension does not match the model input")
    if train_data.num_classes != model.num_classes or test_data.num_classes != model.num_classes:
        raise InvalidArgumentError("dataset num_classes does not match the model output")
    if loss is None:
        loss = make_loss(cfg.loss_name, model.num_classes, **cfg.loss_params)
    norm = score_norm if score_norm is not None else ScoreNorm(cfg.resolved_score_norm(), cfg.norm_eps)
    snapshot = asdict(cfg)
    snapshot["score_norm"] = norm.kind
    record = TrainRecord(config=snapshot, seed=cfg.seed)

    params = model.parameters()
    velocity = [np.zeros_like(p) for p in params]
    N = len(train_data)
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        order = make_rng(cfg.seed, epoch).permutation(N)
        total_loss = 0.0
        max_norm = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            value, grads = backward(model, train_data.features[idx], train_data.labels[idx], loss, norm)
            gnorm = _global_norm(grads)
            # a non-finite norm means some gradient entry is inf or nan (or overflowed)
            if not (math.isfinite(value) and math.isfinite(gnorm)):
                record.aborted = True
                raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch starting {start}", record)
            total_loss += value * idx.size
            grads, gnorm = _clip(grads, cfg.grad_clip, gnorm)
            max_norm = max(max_norm, gnorm)
            for p, g, v in zip(params, grads, velocity):
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * p
                v *= cfg.momentum
                v += g
                p -= lr * v
        record.epochs.append({
            "epoch": epoch,
            "lr": lr,
            "mean_train_loss": total_loss / N,
            "train_accuracy": evaluate_accuracy(model, train_data, norm),
            "test_accuracy": evaluate_accuracy(model, test_data, norm),
            "max_grad_norm": max_norm,
        })
    return record
