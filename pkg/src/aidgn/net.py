"""Small feedforward feature extractor with explicit gradients, and the
unit-row cosine classifier head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroVector

_ACTIVATIONS = ("softplus", "tanh", "relu", "identity")


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "softplus":
        return np.logaddexp(0.0, x)
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(0.0, x)
    return x


def _act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "softplus":
        return 1.0 / (1.0 + np.exp(-x))
    if name == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if name == "relu":
        return (x > 0.0).astype(float)
    return np.ones_like(x)


@dataclass
class FeatureExtractor:
    """Linear layers with an elementwise nonlinearity on all but the last."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "softplus"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != b.shape[0]:
                raise DimensionMismatch("bias length must match layer output width")
        for wa, wb in zip(self.weights, self.weights[1:]):
            if wb.shape[1] != wa.shape[0]:
                raise DimensionMismatch("consecutive layer dimensions are inconsistent")

    @classmethod
    def random(cls, dims: list[int], rng: np.random.Generator, activation: str = "softplus"):
        """Glorot-initialized network; `dims` lists input, hidden and output widths."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            weights.append(rng.standard_normal((fan_out, fan_in)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases, activation=activation)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "FeatureExtractor":
        return FeatureExtractor(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )


def forward_features(x, extractor: FeatureExtractor) -> np.ndarray:
    """Deterministic forward pass for one input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != extractor.input_dim:
        raise DimensionMismatch(f"input must have dimension {extractor.input_dim}")
    return forward_batch(x[None, :], extractor)[0]


def forward_batch(x: np.ndarray, extractor: FeatureExtractor, want_cache: bool = False):
    """Row-wise forward pass; with `want_cache` also returns what backprop needs."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != extractor.input_dim:
        raise DimensionMismatch(f"inputs must have {extractor.input_dim} columns")
    inputs, preacts = [], []
    a = x
    last = len(extractor.weights) - 1
    for i, (w, b) in enumerate(zip(extractor.weights, extractor.biases)):
        inputs.append(a)
        h = a @ w.T + b
        preacts.append(h)
        a = h if i == last else _act(extractor.activation, h)
    if want_cache:
        return a, (inputs, preacts)
    return a


def backward_batch(d_latent: np.ndarray, extractor: FeatureExtractor, cache):
    """Backpropagate latent gradients; returns per-layer weight and bias grads."""
    inputs, preacts = cache
    d_weights = [None] * len(extractor.weights)
    d_biases = [None] * len(extractor.biases)
    grad = d_latent
    last = len(extractor.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            grad = grad * _act_grad(extractor.activation, preacts[i])
        d_weights[i] = grad.T @ inputs[i]
        d_biases[i] = grad.sum(axis=0)
        if i > 0:
            grad = grad @ extractor.weights[i]
    return d_weights, d_biases


@dataclass
class ClassifierHead:
    """C unit direction vectors; rows are renormalized after every update."""

    directions: np.ndarray

    def __post_init__(self):
        self.directions = np.asarray(self.directions, dtype=float)
        if self.directions.ndim != 2:
            raise DimensionMismatch("directions must be a (C, n) matrix")

    @classmethod
    def random(cls, n_classes: int, latent_dim: int, rng: np.random.Generator):
        d = rng.standard_normal((n_classes, latent_dim))
        return cls(directions=d / np.linalg.norm(d, axis=1, keepdims=True))

    @property
    def n_classes(self) -> int:
        return self.directions.shape[0]

    def renormalize(self) -> None:
        self.directions /= np.linalg.norm(self.directions, axis=1, keepdims=True)

    def copy(self) -> "ClassifierHead":
        return ClassifierHead(directions=self.directions.copy())


def cosine_scores(z, head: ClassifierHead) -> np.ndarray:
    """<w_c, z> / ||z|| per class, in [-1, 1] for unit rows."""
    z = np.asarray(z, dtype=float)
    if z.size != head.directions.shape[1]:
        raise DimensionMismatch("latent dimension does not match the head")
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise ZeroVector("cosine scores undefined for the zero latent")
    return head.directions @ (z / norm)


def cosine_scores_batch(z: np.ndarray, head: ClassifierHead) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("cosine scores undefined for a zero latent")
    return (z / norms[:, None]) @ head.directions.T


def linear_scores_batch(z: np.ndarray, head: ClassifierHead) -> np.ndarray:
    """Plain dot-product logits for the linear-head ERM mode."""
    return np.asarray(z, dtype=float) @ head.directions.T
