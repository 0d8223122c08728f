"""Dense numerical building blocks: probabilities, cosine, MLP and Adam.

Everything works on float64 numpy arrays. Matrices are 2-D row-major
arrays (one sample per row), vectors are 1-D arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import InvalidArgumentError, InvalidStateError, NumericError, ZeroNormError

_param_ids = itertools.count()


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis``."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise InvalidArgumentError("softmax of an empty vector")
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def entropy(probs, axis: int = -1) -> np.ndarray | float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0:
        raise InvalidArgumentError("entropy of an empty distribution")
    if np.any(p < 0):
        raise InvalidArgumentError("probabilities must be non-negative")
    h = -np.sum(xlogy(p, p), axis=axis)
    return float(h) if np.ndim(h) == 0 else h


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise InvalidArgumentError(f"cosine needs equal-length vectors, got {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroNormError("cosine of a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def row_normalize(x) -> tuple[np.ndarray, np.ndarray]:
    """Return (unit rows, row norms). Zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe, norms[..., 0]


# ---------------------------------------------------------------------------
# Multilayer perceptron
# ---------------------------------------------------------------------------


@dataclass
class MlpParams:
    """Weights ``(in, out)`` and biases ``(out,)`` of a ReLU MLP.

    Hidden layers use a rectifier; the last layer is affine. ``version``
    is bumped on every in-place update so stale forward caches can be
    detected.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    uid: int = field(default_factory=lambda: next(_param_ids))
    version: int = 0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgumentError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidArgumentError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise InvalidArgumentError(f"layer {i} input dim does not chain with layer {i - 1}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self):
        """Yield ``(path, array)`` for every parameter in declaration order."""
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"layers[{i}].weight", w
            yield f"layers[{i}].bias", b

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class MlpCache:
    uid: int
    version: int
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer


def init_mlp(layer_dims, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2 or min(dims) < 1:
        raise InvalidArgumentError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, batch) -> tuple[np.ndarray, MlpCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise InvalidArgumentError(f"batch of shape {x.shape} does not fit input dim {params.in_dim}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, MlpCache(params.uid, params.version, inputs, pre)


def mlp_backward(params: MlpParams, cache: MlpCache, grad_output) -> tuple[MlpGrads, np.ndarray]:
    """Backpropagate ``grad_output`` (d loss / d output) through the MLP.

    Returns parameter gradients and the gradient with respect to the input.
    """
    if cache.uid != params.uid or cache.version != params.version:
        raise InvalidStateError("forward cache does not belong to the current parameters")
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != cache.pre[-1].shape:
        raise InvalidStateError(f"grad_output shape {g.shape} does not match forward output {cache.pre[-1].shape}")
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in reversed(range(n)):
        if i != n - 1:
            g = g * (cache.pre[i] > 0)
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return MlpGrads(gw, gb), g


# ---------------------------------------------------------------------------
# Adam with decoupled weight decay
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_biases: bool = False
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def __post_init__(self):
        for name in ("lr", "beta1", "beta2", "eps"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"Adam {name} must be positive")
        if self.weight_decay < 0:
            raise InvalidArgumentError("weight decay must be non-negative")


def adam_step(state: AdamState, params: MlpParams, grads: MlpGrads) -> None:
    """One in-place Adam update of ``params``; ``state`` is advanced too.

    Weight decay is decoupled: ``lr * weight_decay * theta`` is subtracted
    after the adaptive step, and only from weights unless
    ``state.decay_biases`` is set.
    """
    flat_p = [a for pair in zip(params.weights, params.biases) for a in pair]
    flat_g = [a for pair in zip(grads.weights, grads.biases) for a in pair]
    paths = [p for p, _ in params.arrays()]
    for path, p, g in zip(paths, flat_p, flat_g):
        if g.shape != p.shape:
            raise InvalidArgumentError(f"{path}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {path}")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in flat_p]
        state.v = [np.zeros_like(p) for p in flat_p]
    elif len(state.m) != len(flat_p) or any(m.shape != p.shape for m, p in zip(state.m, flat_p)):
        raise InvalidArgumentError("Adam accumulators do not match parameter shapes")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for idx, (p, g) in enumerate(zip(flat_p, flat_g)):
        m = state.m[idx]
        v = state.v[idx]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        is_bias = idx % 2 == 1
        decay = state.weight_decay if (state.decay_biases or not is_bias) else 0.0
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if decay:
            update = update + state.lr * decay * p
        p -= update
    params.version += 1
