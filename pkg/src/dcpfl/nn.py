"""Feed-forward classifier with exact backprop gradients and plain SGD.

Hidden layers use tanh, the output layer is linear into a softmax
cross-entropy loss. Everything is a pure function over value types, so
per-client training calls are safe to run in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericalError


@dataclass
class ModelParams:
    """Per-layer weight matrices and bias vectors.

    Block k has weight shape (layer_dims[k+1], layer_dims[k]) and bias
    length layer_dims[k+1].
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ConfigError("weights and biases must have the same number of blocks")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ConfigError(f"block {k}: weight {w.shape} and bias {b.shape} disagree")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ConfigError(f"block {k}: input width does not match block {k-1} output")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def dim(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def layer_size(self, k: int) -> int:
        return self.weights[k].size + self.biases[k].size

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def flatten_layer(self, k: int) -> np.ndarray:
        return np.concatenate([self.weights[k].ravel(), self.biases[k]])

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def same_shape(self, other: "ModelParams") -> bool:
        return len(self.weights) == len(other.weights) and all(
            w.shape == v.shape and b.shape == c.shape
            for w, v, b, c in zip(self.weights, other.weights, self.biases, other.biases)
        )

    def allclose(self, other: "ModelParams", atol: float = 0.0, rtol: float = 0.0) -> bool:
        return self.same_shape(other) and all(
            np.allclose(w, v, atol=atol, rtol=rtol) and np.allclose(b, c, atol=atol, rtol=rtol)
            for w, v, b, c in zip(self.weights, other.weights, self.biases, other.biases)
        )


@dataclass
class Batch:
    inputs: np.ndarray  # (batch_size, input_dim)
    labels: np.ndarray  # (batch_size,) class indices

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise InputError("batch inputs must be a non-empty 2-d array")
        if self.labels.shape != (self.inputs.shape[0],):
            raise InputError("labels must be one class index per sample")


def init_params(layer_dims: list[int], seed: int) -> ModelParams:
    """Glorot-uniform initialization, seeded."""
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ConfigError(f"bad layer dims: {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def forward(params: ModelParams, batch: Batch):
    """Return (logits, cached activations). Hidden layers tanh, output linear."""
    if batch.inputs.shape[1] != params.layer_dims[0]:
        raise ConfigError(
            f"batch input dim {batch.inputs.shape[1]} != model input dim {params.layer_dims[0]}"
        )
    activations = [batch.inputs]
    a = batch.inputs
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if k == last else np.tanh(z)
        activations.append(a)
    return a, activations


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(params: ModelParams, batch: Batch) -> float:
    """Mean cross-entropy of the model on the batch."""
    logits, _ = forward(params, batch)
    logp = _log_softmax(logits)
    n = batch.inputs.shape[0]
    return float(-logp[np.arange(n), batch.labels].mean())


def loss_and_grad(params: ModelParams, batch: Batch):
    """Mean cross-entropy and exact gradients of the same shape as params."""
    n_classes = params.layer_dims[-1]
    if batch.labels.max() >= n_classes or batch.labels.min() < 0:
        raise InputError("label out of range")
    logits, activations = forward(params, batch)
    logp = _log_softmax(logits)
    n = batch.inputs.shape[0]
    loss = float(-logp[np.arange(n), batch.labels].mean())
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss at output layer {params.n_layers - 1}")

    # delta at the output: (softmax - onehot) / n
    delta = np.exp(logp)
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n

    g_w = [None] * params.n_layers
    g_b = [None] * params.n_layers
    for k in range(params.n_layers - 1, -1, -1):
        a_in = activations[k]
        g_w[k] = delta.T @ a_in
        g_b[k] = delta.sum(axis=0)
        if not (np.isfinite(g_w[k]).all() and np.isfinite(g_b[k]).all()):
            raise NumericalError(f"non-finite gradient at layer {k}")
        if k > 0:
            # tanh' = 1 - tanh^2, with activations[k] = tanh(z_k)
            delta = (delta @ params.weights[k]) * (1.0 - activations[k] ** 2)
    return loss, ModelParams(g_w, g_b)


def sgd_step(params: ModelParams, grads: ModelParams, lr: float) -> ModelParams:
    """p' = p - lr * g, elementwise."""
    if not params.same_shape(grads):
        raise ConfigError("gradient shape does not match parameters")
    return ModelParams(
        [w - lr * g for w, g in zip(params.weights, grads.weights)],
        [b - lr * g for b, g in zip(params.biases, grads.biases)],
    )


def local_train(
    params: ModelParams,
    inputs: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    rng_seed: int,
) -> ModelParams:
    """Run `epochs` full passes of minibatch SGD with seeded shuffling."""
    if inputs.shape[0] == 0:
        raise InputError("empty dataset")
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    rng = np.random.default_rng(rng_seed)
    n = inputs.shape[0]
    current = params
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = loss_and_grad(current, Batch(inputs[idx], labels[idx]))
            current = sgd_step(current, grads, lr)
    return current
