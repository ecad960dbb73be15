"""Trainable classifier heads over embedding vectors.

Single-modality heads and the fusion network share one architecture: a
fully connected net with ReLU hidden layers and a softmax output, trained
from scratch with mini-batch SGD on softmax cross-entropy. Weight matrices
follow the (fan_out, fan_in) convention, so weights[l] maps
layer_dims[l] -> layer_dims[l + 1]. All arithmetic is float64 in memory;
serialized models are float32 TEN tensors plus a JSON header.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .data_io import EmbeddingSet, PairedEmbeddings, read_tensor, write_tensor
from .errors import ContractError, DataError, DivergenceError

__all__ = [
    "MlpModel",
    "TrainConfig",
    "TrainResult",
    "Prediction",
    "init_model",
    "forward",
    "forward_batch",
    "loss_and_grad",
    "mean_loss",
    "predict",
    "predict_batch",
    "naive_average_probs",
    "train_head",
    "train_fusion",
    "save_model",
    "load_model",
]

OPTIMIZERS = ("sgd", "sgd-momentum")
_MOMENTUM = 0.9


@dataclass
class MlpModel:
    """Fully connected network: ReLU hidden layers, softmax output."""

    layer_dims: list[int]
    weights: list[np.ndarray]   # weights[l] has shape (layer_dims[l+1], layer_dims[l])
    biases: list[np.ndarray]    # biases[l] has shape (layer_dims[l+1],)
    activation: str = "relu"
    seed: int | None = None

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2:
            raise ContractError("a model needs at least input and output layers")
        if self.activation != "relu":
            raise ContractError(f"unsupported activation {self.activation!r}")
        expected = len(self.layer_dims) - 1
        if len(self.weights) != expected or len(self.biases) != expected:
            raise ContractError("weights/biases count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[l + 1], self.layer_dims[l])
            if w.shape != want:
                raise ContractError(f"weights[{l}] shape {w.shape}, expected {want}")
            if b.shape != (self.layer_dims[l + 1],):
                raise ContractError(f"biases[{l}] shape {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ContractError(f"layer {l} has non-finite parameters")

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch SGD hyperparameters.

    The synthetic suites in this repository train stably at learning rates
    up to 0.1 with the default scaled-uniform init; full-set loss is
    non-increasing per epoch in that regime.
    """

    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    optimizer: str = "sgd"       # "sgd" or "sgd-momentum" (momentum 0.9)
    hidden_dim: int = 1024

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ContractError(f"optimizer must be one of {OPTIMIZERS}")
        if self.hidden_dim < 1:
            raise ContractError("hidden_dim must be >= 1")


class TrainResult(NamedTuple):
    model: MlpModel
    loss_history: list[float]   # full-set cross-entropy after each epoch


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    class_probabilities: np.ndarray
    argmax_class: int


def init_model(layer_dims: Sequence[int], rng: np.random.Generator) -> MlpModel:
    """Scaled-uniform fan-in init: W ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), b = 0."""
    dims = list(int(d) for d in layer_dims)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_pass(model: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Returns (activations per layer incl. input, pre-activations per layer).

    Overflow is allowed to propagate as inf/nan; divergence checks catch it
    where a finite result is required.
    """
    activations = [x]
    pre = []
    a = x
    last = len(model.weights) - 1
    with np.errstate(over="ignore", invalid="ignore"):
        for l, (w, b) in enumerate(zip(model.weights, model.biases)):
            z = a @ w.T + b
            pre.append(z)
            a = np.maximum(z, 0.0) if l < last else z
            activations.append(a)
    return activations, pre


def forward_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ContractError(f"expected inputs of shape (N, {model.input_dim}), got {x.shape}")
    if not np.isfinite(x).all():
        raise ContractError("inputs must be finite")
    activations, _ = _forward_pass(model, x)
    return _softmax(activations[-1])


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single input vector; they sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError(f"expected a 1-D input, got shape {x.shape}")
    return forward_batch(model, x[None, :])[0]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        z = logits - logits.max(axis=-1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ContractError(f"labels must lie in [0, {n_classes})")
    return y


def mean_loss(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy, forward pass only."""
    x = np.asarray(x, dtype=np.float64)
    y = _check_labels(labels, model.n_classes)
    activations, _ = _forward_pass(model, x)
    logp = _log_softmax(activations[-1])
    return float(-logp[np.arange(len(y)), y].mean())


def loss_and_grad(
    model: MlpModel, x: np.ndarray, labels: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy over the batch and backprop gradients per layer.

    Gradients use mean semantics, so duplicating every sample leaves both
    the loss and every gradient unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ContractError(f"expected inputs of shape (N, {model.input_dim}), got {x.shape}")
    y = _check_labels(labels, model.n_classes)
    if len(y) != len(x):
        raise ContractError("batch inputs and labels disagree on length")
    if len(y) == 0:
        raise ContractError("batch must be non-empty")

    activations, pre = _forward_pass(model, x)
    logp = _log_softmax(activations[-1])
    loss = float(-logp[np.arange(len(y)), y].mean())
    if not np.isfinite(loss):
        raise DivergenceError(
            f"non-finite loss on a batch of {len(y)} samples "
            f"(max |input| {np.abs(x).max():.3g}, max |logit| {np.abs(activations[-1]).max():.3g})"
        )

    probs = np.exp(logp)
    delta = probs
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.weights)  # type: ignore
    for l in range(len(model.weights) - 1, -1, -1):
        grads[l] = (delta.T @ activations[l], delta.sum(axis=0))
        if l > 0:
            delta = (delta @ model.weights[l]) * (pre[l - 1] > 0.0)
    return loss, grads


def predict(model: MlpModel, x: np.ndarray, sample_id: str = "") -> Prediction:
    """Argmax prediction; ties break toward the lowest class index."""
    probs = forward(model, x)
    return Prediction(sample_id, probs, int(np.argmax(probs)))


def predict_batch(
    model: MlpModel, x: np.ndarray, sample_ids: Sequence[str] | None = None
) -> list[Prediction]:
    probs = forward_batch(model, x)
    if sample_ids is None:
        sample_ids = [""] * len(probs)
    if len(sample_ids) != len(probs):
        raise ContractError("sample_ids and inputs disagree on length")
    return [
        Prediction(sid, p, int(np.argmax(p))) for sid, p in zip(sample_ids, probs)
    ]


def naive_average_probs(probs_a: np.ndarray, probs_b: np.ndarray) -> np.ndarray:
    """Equal-weight average of two probability vectors (or batches)."""
    a = np.asarray(probs_a, dtype=np.float64)
    b = np.asarray(probs_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"probability shapes differ: {a.shape} vs {b.shape}")
    return (a + b) / 2.0


def _align_labels(ids: Sequence[str], labels) -> np.ndarray:
    if isinstance(labels, Mapping):
        missing = [sid for sid in ids if sid not in labels]
        if missing:
            raise DataError(f"labels missing for sample ids {missing[:10]}")
        return np.array([labels[sid] for sid in ids], dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(y) != len(ids):
        raise ContractError("label array and sample ids disagree on length")
    return y


def _train(
    x: np.ndarray, y: np.ndarray, layer_dims: list[int], config: TrainConfig
) -> TrainResult:
    rng = np.random.default_rng(config.seed)
    model = init_model(layer_dims, rng)
    model.seed = config.seed
    velocity = None
    if config.optimizer == "sgd-momentum":
        velocity = [
            (np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(model.weights, model.biases)
        ]

    history: list[float] = []
    n = len(x)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            try:
                _, grads = loss_and_grad(model, x[idx], y[idx])
            except DivergenceError as exc:
                raise DivergenceError(
                    f"training diverged ({exc}); try a lower learning rate"
                ) from exc
            for l, (dw, db) in enumerate(grads):
                if velocity is not None:
                    vw, vb = velocity[l]
                    vw *= _MOMENTUM
                    vw += dw
                    vb *= _MOMENTUM
                    vb += db
                    dw, db = vw, vb
                model.weights[l] -= config.learning_rate * dw
                model.biases[l] -= config.learning_rate * db
        epoch_loss = mean_loss(model, x, y)
        params_finite = all(
            np.isfinite(w).all() and np.isfinite(b).all()
            for w, b in zip(model.weights, model.biases)
        )
        if not np.isfinite(epoch_loss) or not params_finite:
            raise DivergenceError(
                "training diverged to non-finite values; try a lower learning rate"
            )
        history.append(epoch_loss)
    return TrainResult(model, history)


def train_head(
    embeddings: EmbeddingSet,
    labels,
    config: TrainConfig | None = None,
    n_classes: int | None = None,
) -> TrainResult:
    """Train a single-modality head of shape [dim, hidden, classes].

    labels is either a mapping sample_id -> class or an array aligned with
    the embedding set's record order. Needs at least two distinct classes.
    """
    config = config or TrainConfig()
    y = _align_labels(embeddings.ids, labels)
    if len(np.unique(y)) < 2:
        raise ContractError("training needs at least 2 distinct classes")
    classes = n_classes if n_classes is not None else int(y.max()) + 1
    y = _check_labels(y, classes)
    return _train(embeddings.vectors, y, [embeddings.dim, config.hidden_dim, classes], config)


def train_fusion(
    pairs: PairedEmbeddings,
    labels,
    config: TrainConfig | None = None,
    n_classes: int | None = None,
) -> TrainResult:
    """Train the fusion network on concatenated embedding pairs."""
    config = config or TrainConfig()
    y = _align_labels(pairs.ids, labels)
    if len(np.unique(y)) < 2:
        raise ContractError("training needs at least 2 distinct classes")
    classes = n_classes if n_classes is not None else int(y.max()) + 1
    y = _check_labels(y, classes)
    dims = [pairs.rgb_dim + pairs.hha_dim, config.hidden_dim, classes]
    return _train(pairs.vectors, y, dims, config)


# ---------------------------------------------------------------------------
# Serialization: one JSON header plus one TEN tensor per weight/bias


def save_model(model: MlpModel, directory: str | Path, config: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    f32_max = float(np.finfo(np.float32).max)
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        if max(np.abs(w).max(initial=0.0), np.abs(b).max(initial=0.0)) > f32_max:
            raise ContractError(f"layer {l} parameters overflow the float32 model format")
    weight_files = []
    bias_files = []
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        wf, bf = f"w{l}.ten", f"b{l}.ten"
        write_tensor(directory / wf, w)
        write_tensor(directory / bf, b)
        weight_files.append(wf)
        bias_files.append(bf)
    header = {
        "layer_dims": model.layer_dims,
        "activation": model.activation,
        "seed": model.seed,
        "weights": weight_files,
        "biases": bias_files,
    }
    if config is not None:
        header["config"] = config
    (directory / "model.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_model(directory: str | Path) -> MlpModel:
    directory = Path(directory)
    try:
        header = json.loads((directory / "model.json").read_text())
        weights = [
            read_tensor(directory / f).astype(np.float64) for f in header["weights"]
        ]
        biases = [read_tensor(directory / f).astype(np.float64) for f in header["biases"]]
        return MlpModel(
            [int(d) for d in header["layer_dims"]],
            weights,
            biases,
            activation=header.get("activation", "relu"),
            seed=header.get("seed"),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot load model from {directory}: {exc}") from exc
