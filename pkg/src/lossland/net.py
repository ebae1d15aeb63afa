"""Fully connected sigmoid network on a flat float64 parameter vector.

The whole package treats a model as a single 1-D ``float64`` array.  The
layout is fixed so checkpoints stay portable:

    for each layer l (input -> output order):
        weight matrix W_l, shape (fan_in, fan_out), flattened row-major
        bias vector b_l, length fan_out

Hidden layers apply the logistic sigmoid; the output layer is softmax and the
error is the mean cross-entropy over the batch.  All arithmetic is float64 and
single-threaded evaluation order is fixed, so repeated calls on the same
inputs are bitwise identical.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .errors import ConfigError

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300  # clamp for log() when a caller hands in literal zeros


class Activation(Enum):
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: layer widths plus the hidden activation."""

    layer_sizes: tuple[int, ...]
    activation: Activation = Activation.SIGMOID

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError("layer_sizes needs at least input and output widths")
        if any(n < 1 for n in sizes):
            raise ConfigError(f"layer widths must be >= 1, got {sizes}")

    @property
    def parameter_count(self) -> int:
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    def layer_slices(self) -> list[tuple[slice, slice, tuple[int, int]]]:
        """(weight slice, bias slice, weight shape) per layer, in layout order."""
        out = []
        off = 0
        s = self.layer_sizes
        for i in range(len(s) - 1):
            n_in, n_out = s[i], s[i + 1]
            w = slice(off, off + n_in * n_out)
            off += n_in * n_out
            b = slice(off, off + n_out)
            off += n_out
            out.append((w, b, (n_in, n_out)))
        return out


@dataclass
class Batch:
    """Input rows in [0, 1] with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.inputs.ndim != 2:
            raise ConfigError(f"batch inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels.ndim != 1 or len(self.labels) != self.inputs.shape[0]:
            raise ConfigError(
                f"labels length {self.labels.shape} does not match "
                f"{self.inputs.shape[0]} input rows"
            )
        if self.inputs.shape[0] < 1:
            raise ConfigError("batch must contain at least one sample")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ConfigError("batch inputs must lie in [0, 1]")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Seeded init: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.parameter_count)
    for w_sl, _, (n_in, n_out) in spec.layer_slices():
        bound = 1.0 / np.sqrt(n_in)
        params[w_sl] = rng.uniform(-bound, bound, size=n_in * n_out)
    return params


def unpack(spec: NetworkSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (no copies) of (W, b) per layer."""
    return [
        (params[w_sl].reshape(shape), params[b_sl])
        for w_sl, b_sl, shape in spec.layer_slices()
    ]


def pack(spec: NetworkSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    out = np.empty(spec.parameter_count)
    for (w_sl, b_sl, shape), (W, b) in zip(spec.layer_slices(), layers):
        out[w_sl] = np.asarray(W).reshape(-1)
        out[b_sl] = b
    return out


def check_params(spec: NetworkSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != spec.parameter_count:
        raise ConfigError(
            f"parameter vector has length {params.shape}, "
            f"spec {spec.layer_sizes} needs {spec.parameter_count}"
        )
    if not np.all(np.isfinite(params)):
        raise ConfigError("parameter vector contains NaN or Inf")
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # expit is the overflow-safe logistic
    return expit(z)


def _forward_pass(spec, params, inputs):
    """Activations per layer plus output logits; inputs assumed validated."""
    layers = unpack(spec, params)
    acts = [inputs]
    a = inputs
    for W, b in layers[:-1]:
        a = _sigmoid(a @ W + b)
        acts.append(a)
    W, b = layers[-1]
    logits = a @ W + b
    return acts, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(spec: NetworkSpec, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Class-probability matrix, one row per sample; rows sum to 1."""
    params = check_params(spec, params)
    if batch.inputs.shape[1] != spec.layer_sizes[0]:
        raise ConfigError(
            f"batch has {batch.inputs.shape[1]} features, "
            f"spec expects {spec.layer_sizes[0]}"
        )
    _, logits = _forward_pass(spec, params, batch.inputs)
    return np.exp(_log_softmax(logits))


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class.

    Zero probabilities on a true class are clamped to 1e-300 and logged as a
    diagnostic; the training path never materializes probabilities, so the
    clamp only matters for externally supplied matrices.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    p_true = probs[np.arange(len(labels)), labels]
    n_zero = int(np.count_nonzero(p_true < PROB_FLOOR))
    if n_zero:
        log.warning("cross_entropy: clamped %d zero probabilities to %g", n_zero, PROB_FLOOR)
        p_true = np.maximum(p_true, PROB_FLOOR)
    return float(-np.mean(np.log(p_true)))


def error_on(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray,
             labels: np.ndarray) -> float:
    """Cross-entropy error computed from log-softmax directly (no prob round trip)."""
    _, logits = _forward_pass(spec, params, inputs)
    ls = _log_softmax(logits)
    return float(-np.mean(ls[np.arange(len(labels)), labels]))


def gradient(spec: NetworkSpec, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Backprop gradient of the mean cross-entropy, same layout as params."""
    params = check_params(spec, params)
    return _gradient_arrays(spec, params, batch.inputs, batch.labels)


def _gradient_arrays(spec, params, inputs, labels):
    acts, logits = _forward_pass(spec, params, inputs)
    layers = unpack(spec, params)
    n = inputs.shape[0]

    probs = np.exp(_log_softmax(logits))
    delta = probs
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad = np.empty_like(params)
    slices = spec.layer_slices()
    for l in range(len(layers) - 1, -1, -1):
        w_sl, b_sl, shape = slices[l]
        a_prev = acts[l]
        grad[w_sl] = (a_prev.T @ delta).reshape(-1)
        grad[b_sl] = delta.sum(axis=0)
        if l > 0:
            W, _ = layers[l]
            delta = (delta @ W.T) * (acts[l] * (1.0 - acts[l]))
    return grad


def radial_distance(params: np.ndarray, ref: np.ndarray) -> float:
    """Euclidean distance between two parameter vectors."""
    params = np.asarray(params, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if params.shape != ref.shape:
        raise ConfigError(f"length mismatch: {params.shape} vs {ref.shape}")
    diff = params - ref
    return float(np.sqrt(diff @ diff))
