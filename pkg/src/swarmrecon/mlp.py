"""Minimal feedforward approximator shared by policies, critics, and
discriminators: relu MLP forward pass, exact backpropagation, bias-corrected
Adam, and a versioned JSON checkpoint format.

Gradients are computed analytically against the post-head output, so callers
express losses as d(loss)/d(output) and head jacobians (softmax, sigmoid)
are handled here. relu's subgradient at exactly 0 is taken as 0.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1

HEADS = ("linear", "softmax", "sigmoid")


class DivergenceError(ArithmeticError):
    """Non-finite values encountered during optimization."""


@dataclass
class MlpParams:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[i]: (layer_sizes[i], layer_sizes[i+1])
    biases: list[np.ndarray]
    head: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpParams":
        return MlpParams(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            head=self.head,
        )


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self):
        return self.weights + self.biases


def init_mlp(
    layer_sizes: "list[int]",
    head: str,
    rng: np.random.Generator,
    dtype=np.float64,
) -> MlpParams:
    """He-scaled normal init for relu hidden layers, small uniform head."""
    if head not in HEADS:
        raise ValueError(f"head must be one of {HEADS}, got {head!r}")
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    last = len(layer_sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        if i == last:
            w = rng.uniform(-0.01, 0.01, size=(fan_in, fan_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        weights.append(w.astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(list(layer_sizes), weights, biases, head)


def _apply_head(z: np.ndarray, head: str) -> np.ndarray:
    if head == "linear":
        return z
    if head == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Affine-relu chain; returns (output, pre-relu activations per hidden layer,
    post-relu activations including the input)."""
    h = x
    pre = []
    post = [x]
    n_layers = len(params.weights)
    for i in range(n_layers - 1):
        z = h @ params.weights[i] + params.biases[i]
        pre.append(z)
        h = np.maximum(z, 0.0)
        post.append(h)
    z_out = h @ params.weights[-1] + params.biases[-1]
    return _apply_head(z_out, params.head), pre, post


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single vector or a (batch, in_dim) matrix."""
    x = np.asarray(x, dtype=params.weights[0].dtype)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != expected {params.in_dim}")
    out, _, _ = _forward_cached(params, x)
    return out[0] if single else out


def backward(
    params: MlpParams, x: np.ndarray, output_gradient: np.ndarray
) -> MlpGrads:
    """Exact parameter gradients given d(loss)/d(output).

    Accepts single vectors or batches; batch gradients are summed over rows
    (scale the output gradient for mean semantics).
    """
    x = np.asarray(x, dtype=params.weights[0].dtype)
    dout = np.asarray(output_gradient, dtype=params.weights[0].dtype)
    if x.ndim == 1:
        x = x[None, :]
        dout = dout[None, :]
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != expected {params.in_dim}")
    if dout.shape != (x.shape[0], params.out_dim):
        raise ValueError(
            f"output gradient shape {dout.shape} != {(x.shape[0], params.out_dim)}"
        )
    y, pre, post = _forward_cached(params, x)
    if params.head == "linear":
        dz = dout
    elif params.head == "sigmoid":
        dz = dout * y * (1.0 - y)
    else:  # softmax jacobian, rowwise
        dz = y * (dout - (dout * y).sum(axis=-1, keepdims=True))
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    for i in reversed(range(len(params.weights))):
        grads_w[i] = post[i].T @ dz
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ params.weights[i].T) * (pre[i - 1] > 0.0)
    return MlpGrads(grads_w, grads_b)


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.m_w = [np.zeros_like(w) for w in params.weights]
        state.v_w = [np.zeros_like(w) for w in params.weights]
        state.m_b = [np.zeros_like(b) for b in params.biases]
        state.v_b = [np.zeros_like(b) for b in params.biases]
        return state


def adam_step(params: MlpParams, grads: MlpGrads, state: AdamState) -> None:
    """Bias-corrected Adam update, in place. Rejects non-finite gradients."""
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient; step rejected")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    scale = state.learning_rate * np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
    for target, g, m, v in (
        (params.weights, grads.weights, state.m_w, state.v_w),
        (params.biases, grads.biases, state.m_b, state.v_b),
    ):
        for i in range(len(target)):
            m[i] *= b1
            m[i] += (1 - b1) * g[i]
            v[i] *= b2
            v[i] += (1 - b2) * (g[i] * g[i])
            target[i] -= scale * m[i] / (np.sqrt(v[i]) + state.epsilon)


def clip_grad_norm(grads: MlpGrads, max_norm: float) -> float:
    """Scale gradients in place to a global L2 norm cap; returns the raw norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.arrays()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.arrays():
            g *= factor
    return total


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(
    path: str | Path, networks: "dict[str, MlpParams]", metadata: dict
) -> None:
    """Versioned JSON checkpoint of named networks plus a metadata block."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "metadata": metadata,
        "networks": {
            name: {
                "layer_sizes": list(p.layer_sizes),
                "head": p.head,
                "weights": [w.ravel().tolist() for w in p.weights],
                "biases": [b.tolist() for b in p.biases],
            }
            for name, p in networks.items()
        },
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> "tuple[dict[str, MlpParams], dict]":
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {doc.get('version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    networks = {}
    for name, net in doc["networks"].items():
        sizes = net["layer_sizes"]
        weights = [
            np.array(flat, dtype=np.float64).reshape(sizes[i], sizes[i + 1])
            for i, flat in enumerate(net["weights"])
        ]
        biases = [np.array(b, dtype=np.float64) for b in net["biases"]]
        networks[name] = MlpParams(list(sizes), weights, biases, net["head"])
    return networks, doc.get("metadata", {})
