"""Small fully connected Q-network with hand-written backprop and momentum SGD.

Weights are stored as ``(fan_out, fan_in)`` matrices so a layer computes
``x @ W.T + b`` on a batch of row vectors. Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DEFAULT_LAYER_SIZES = (20, 64, 64, 9)


class ShapeMismatch(ValueError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved, layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def copy_from(self, other: "MlpParams") -> None:
        for dst, src in zip(self.arrays(), other.arrays()):
            dst[...] = src

    def equals(self, other: "MlpParams") -> bool:
        """Exact (bitwise value) equality."""
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(mine, theirs)
        )


# Gradients share the parameter container.
Gradients = MlpParams


def init_params(seed: int, layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES) -> MlpParams:
    """He-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.n_inputs:
        raise ShapeMismatch(f"expected input with last dim {params.n_inputs}, got shape {x.shape}")
    return x.reshape(-1, params.n_inputs)


def forward_cached(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass on a batch, returning outputs and per-layer inputs for backprop."""
    h = _as_batch(params, x)
    inputs = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h, inputs


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Q-values for one observation (1-D input) or a batch (2-D input)."""
    out, _ = forward_cached(params, x)
    return out[0] if np.ndim(x) == 1 else out


def backward(
    params: MlpParams,
    x: np.ndarray,
    upstream: np.ndarray,
    cache: Optional[list[np.ndarray]] = None,
) -> Gradients:
    """Gradient of ``sum(forward(x) * upstream)`` w.r.t. every parameter.

    Batched inputs accumulate (sum) over the batch.
    """
    if cache is None:
        _, cache = forward_cached(params, x)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape[-1] != params.n_outputs or g.ndim not in (1, 2):
        raise ShapeMismatch(f"expected upstream gradient with last dim {params.n_outputs}, got {g.shape}")
    g = g.reshape(-1, params.n_outputs)
    if g.shape[0] != cache[0].shape[0]:
        raise ShapeMismatch(f"batch size mismatch: inputs {cache[0].shape[0]}, upstream {g.shape[0]}")
    n = len(params.weights)
    dw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        h = cache[i]
        dw[i] = g.T @ h
        db[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i]) * (h > 0.0)
    return MlpParams(dw, db)


def sgd_step(
    params: MlpParams,
    grads: Gradients,
    learning_rate: float,
    velocity: MlpParams,
    momentum: float = 0.9,
) -> MlpParams:
    """In-place momentum SGD: ``v = momentum * v + g; p -= lr * v``."""
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    for p, g, v in zip(params.arrays(), grads.arrays(), velocity.arrays()):
        v *= momentum
        v += g
        p -= learning_rate * v
    return params


def adam_step(
    params: MlpParams,
    grads: Gradients,
    learning_rate: float,
    first: MlpParams,
    second: MlpParams,
    step: int,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> MlpParams:
    """In-place Adam update; ``step`` counts from 1 and drives bias correction."""
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    if step < 1:
        raise ValueError("step counts from 1")
    b1, b2 = betas
    c1, c2 = 1.0 - b1**step, 1.0 - b2**step
    for p, g, m, v in zip(params.arrays(), grads.arrays(), first.arrays(), second.arrays()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def grad_norm(grads: Gradients) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays())))


def params_to_dict(params: MlpParams) -> dict:
    return {
        "format": "couplednav-mlp/1",
        "layer_sizes": list(params.layer_sizes),
        "weights": [w.ravel(order="C").tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(data: dict) -> MlpParams:
    sizes = [int(s) for s in data["layer_sizes"]]
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = np.array(data["weights"][k], dtype=np.float64)
        b = np.array(data["biases"][k], dtype=np.float64)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise ShapeMismatch(f"layer {k}: expected {fan_out}x{fan_in} weights and {fan_out} biases")
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    return MlpParams(weights, biases)


def save_params(params: MlpParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path: str | Path) -> MlpParams:
    return params_from_dict(json.loads(Path(path).read_text()))
