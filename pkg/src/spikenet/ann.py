"""Layered feed-forward ReLU networks trained with plain mini-batch SGD."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WEIGHT_FORMAT = "spikenet-ann/1"
ACTIVATIONS = ("relu", "identity")


class ModelError(ValueError):
    pass


class WeightFileError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class Layer:
    weight: np.ndarray  # (fan_out, fan_in)
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ModelError(f"bias shape {self.bias.shape} does not match weight shape {self.weight.shape}")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ModelError("layer parameters must be finite")

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class AnnModel:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ModelError("model needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].fan_in != self.layers[k - 1].fan_out:
                raise ModelError(
                    f"layer {k} expects {self.layers[k].fan_in} inputs but layer {k - 1} "
                    f"produces {self.layers[k - 1].fan_out}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def copy(self) -> "AnnModel":
        return AnnModel([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


@dataclass
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("inputs must be (batch, dim) with one label per row")
        if self.inputs.size and (self.inputs.min() < 0 or self.inputs.max() > 1):
            raise ValueError("inputs must be normalised to [0, 1]")

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "LabeledBatch":
        return LabeledBatch(self.inputs[idx], self.labels[idx])


def _act(x, tag):
    return np.maximum(x, 0.0) if tag == "relu" else x


def init_model(sizes, seed: int, output_activation: str = "identity") -> AnnModel:
    """He-scaled Gaussian weights, zero biases; ReLU on every hidden layer."""
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        tag = output_activation if k == len(sizes) - 2 else "relu"
        layers.append(Layer(W, np.zeros(fan_out), tag))
    return AnnModel(layers)


def forward(model: AnnModel, x: np.ndarray):
    """Return ``(activations, output)`` for one input vector or a batch.

    ``activations[k]`` is the post-activation output of layer ``k``; the last
    entry is the output itself.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ModelError(f"input has {x.shape[-1]} features, model expects {model.input_dim}")
    acts = []
    a = x
    for layer in model.layers:
        a = _act(a @ layer.weight.T + layer.bias, layer.activation)
        acts.append(a)
    return acts, a


def predict(model: AnnModel, inputs: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, inputs)[1], axis=-1)


def accuracy(model: AnnModel, data: LabeledBatch) -> float:
    return float(np.mean(predict(model, data.inputs) == data.labels))


def _softmax_xent(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(labels)), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(len(labels)), labels] -= 1.0
    return loss, grad / len(labels)


def loss_and_gradients(model: AnnModel, inputs, labels):
    """Mean softmax cross-entropy and its gradients ``[(dW, db), ...]``."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    labels = np.atleast_1d(np.asarray(labels))
    pre, post = [], [inputs]
    a = inputs
    for layer in model.layers:
        u = a @ layer.weight.T + layer.bias
        a = _act(u, layer.activation)
        pre.append(u)
        post.append(a)
    loss, delta = _softmax_xent(post[-1], labels)
    grads = [None] * len(model.layers)
    for k in reversed(range(len(model.layers))):
        layer = model.layers[k]
        if layer.activation == "relu":
            delta = delta * (pre[k] > 0)
        grads[k] = (delta.T @ post[k], delta.sum(axis=0))
        delta = delta @ layer.weight
    return float(loss), grads


def train_sgd(
    model: AnnModel,
    train: LabeledBatch,
    epochs: int,
    learning_rate: float,
    seed: int,
    batch_size: int = 32,
    test: LabeledBatch | None = None,
    history: list | None = None,
) -> AnnModel:
    """Mini-batch SGD (no momentum) on softmax cross-entropy.

    Returns a trained copy; ``model`` itself is left untouched. Per-epoch
    ``{"epoch", "loss", "train_accuracy", "test_accuracy"}`` records are
    appended to ``history`` when given.
    """
    if len(train) == 0:
        raise TrainingError("training set is empty")
    model = model.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_gradients(model, train.inputs[idx], train.labels[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch} at batch offset {start}")
            total += loss * len(idx)
            for layer, (dW, db) in zip(model.layers, grads):
                layer.weight -= learning_rate * dW
                layer.bias -= learning_rate * db
        if history is not None:
            history.append({
                "epoch": epoch,
                "loss": total / len(train),
                "train_accuracy": accuracy(model, train),
                "test_accuracy": accuracy(model, test) if test is not None else float("nan"),
            })
    return model


def gradient_check(model: AnnModel, x, label, n_params: int = 50, eps: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Checks ``n_params`` parameters sampled uniformly over all layers.
    """
    _, grads = loss_and_gradients(model, x, label)
    rng = np.random.Generator(np.random.PCG64(seed))
    probe = model.copy()
    slots = []
    for k, layer in enumerate(probe.layers):
        slots += [(k, "weight", idx) for idx in np.ndindex(layer.weight.shape)]
        slots += [(k, "bias", idx) for idx in np.ndindex(layer.bias.shape)]
    picks = rng.choice(len(slots), size=min(n_params, len(slots)), replace=False)
    worst = 0.0
    for p in picks:
        k, name, idx = slots[p]
        arr = getattr(probe.layers[k], name)
        orig = arr[idx]
        arr[idx] = orig + eps
        lp, _ = loss_and_gradients(probe, x, label)
        arr[idx] = orig - eps
        lm, _ = loss_and_gradients(probe, x, label)
        arr[idx] = orig
        numeric = (lp - lm) / (2 * eps)
        analytic = grads[k][0 if name == "weight" else 1][idx]
        scale = max(abs(numeric) + abs(analytic), 1e-12)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


# Weight files: JSON, decimal floats in shortest round-trip form.

def model_to_dict(model: AnnModel) -> dict:
    return {
        "format": WEIGHT_FORMAT,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "layers": [
            {
                "fan_in": l.fan_in,
                "fan_out": l.fan_out,
                "activation": l.activation,
                "weight": l.weight.tolist(),
                "bias": l.bias.tolist(),
            }
            for l in model.layers
        ],
    }


def model_from_dict(doc: dict, where: str = "<weights>") -> AnnModel:
    if doc.get("format") != WEIGHT_FORMAT:
        raise WeightFileError(f"{where}: unsupported format tag {doc.get('format')!r}, expected {WEIGHT_FORMAT!r}")
    layers = []
    for k, entry in enumerate(doc.get("layers", [])):
        loc = f"{where}: layers[{k}]"
        try:
            W = np.array(entry["weight"], dtype=float)
            b = np.array(entry["bias"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightFileError(f"{loc}: {exc}") from None
        if W.shape != (entry.get("fan_out"), entry.get("fan_in")):
            raise WeightFileError(f"{loc}: weight shape {W.shape} != declared ({entry.get('fan_out')}, {entry.get('fan_in')})")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise WeightFileError(f"{loc}: non-finite parameter")
        try:
            layers.append(Layer(W, b, entry.get("activation", "relu")))
        except ModelError as exc:
            raise WeightFileError(f"{loc}: {exc}") from None
    try:
        return AnnModel(layers)
    except ModelError as exc:
        raise WeightFileError(f"{where}: {exc}") from None


def save_weights(model: AnnModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), allow_nan=False) + "\n")


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name}")


def load_weights(path) -> AnnModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise WeightFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except ValueError as exc:
        raise WeightFileError(f"{path}: {exc}") from None
    return model_from_dict(doc, str(path))
