# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Small fully connected fields with hand-written forward and backward passes.

Hidden layers use Softplus; the output is either left as is (signed distance)
or squashed with the logistic function (color). Inputs are shifted and scaled
by a fixed normalization stored with the weights.

Blob layout (little-endian)::

    magic      8 bytes  b"SKMLP001"
    layers     uint32
    out_act    uint32   0 = identity, 1 = logistic
    norm       float32[4]  input centre xyz, input scale
    dims       uint32[layers, 2]  (fan_in, fan_out) per layer
    weights    float32 per layer: W (fan_in x fan_out, row-major) then b
"""

import logging
import struct
from pathlib import Path

import numpy as np
from scipy.special import expit

from libs.common.errors import DimensionError, DomainError, SchemaError

logger = logging.getLogger(__name__)

BLOB_MAGIC = b"SKMLP001"
SOFTPLUS_LINEAR_ABOVE = 30.0

_ACTIVATIONS = {"identity": 0, "logistic": 1}


def softplus(x: np.ndarray) -> np.ndarray:
    """ln(1 + e^x), returning x itself above 30"""
    return np.where(x > SOFTPLUS_LINEAR_ABOVE, x, np.log1p(np.exp(np.minimum(x, SOFTPLUS_LINEAR_ABOVE))))


class MlpField:
    """Weights of one field network"""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 out_activation: str = "identity", center: np.ndarray | None = None,
                 scale: float = 1.0):
        if len(weights) != len(biases) or not weights:
            raise DimensionError("Field needs matching, non-empty weight and bias lists")
        if out_activation not in _ACTIVATIONS:
            raise DomainError(f"Unknown output activation '{out_activation}'")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError("Layer weight and bias shapes disagree")
        for w_prev, w_next in zip(weights, weights[1:]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise DimensionError("Consecutive layer sizes disagree")

        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.out_activation = out_activation
        self.center = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64).reshape(3)
        self.scale = float(scale)

    def __repr__(self):
        dims = [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]
        return f"MlpField(dims={dims}, out='{self.out_activation}')"

    @classmethod
    def initialize(cls, rng: np.random.Generator, hidden_layers: int = 4, hidden_units: int = 128,
                   out_dim: int = 1, out_activation: str = "identity", in_dim: int = 3,
                   center: np.ndarray | None = None, scale: float = 1.0) -> "MlpField":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases"""

        dims = [in_dim] + [hidden_units] * hidden_layers + [out_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, out_activation, center, scale)

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] list; arrays are the live parameters"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        out = mlp_forward(self, positions)
        return out[:, 0] if self.out_dim == 1 else out


class ForwardCache:
    """Layer inputs and pre-activations of one forward pass"""

    def __init__(self, inputs: list[np.ndarray], pre: list[np.ndarray], output: np.ndarray):
        self.inputs = inputs
        self.pre = pre
        self.output = output


def _forward(field: MlpField, positions: np.ndarray) -> ForwardCache:
    x = (np.asarray(positions, dtype=np.float64).reshape(-1, 3) - field.center) * field.scale
    inputs, pre = [], []
    a = x
    last = len(field.weights) - 1
    for i, (w, b) in enumerate(zip(field.weights, field.biases)):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        if i < last:
            a = softplus(z)
        elif field.out_activation == "logistic":
            a = expit(z)
        else:
            a = z
    return ForwardCache(inputs, pre, a)


def mlp_forward(field: MlpField, positions: np.ndarray, return_cache: bool = False):
    """(N, out_dim) outputs; optionally with the cache mlp_backward consumes"""

    cache = _forward(field, positions)
    if return_cache:
        return cache.output, cache
    return cache.output


def mlp_backward(field: MlpField, positions: np.ndarray, loss_grad: np.ndarray,
                 cache: ForwardCache | None = None) -> list[np.ndarray]:
    """
    Gradients of the loss w.r.t. every parameter, in parameters() order.
    loss_grad is dL/d(output) with shape (N, out_dim).
    """

    if cache is None:
        cache = _forward(field, positions)

    g = np.asarray(loss_grad, dtype=np.float64).reshape(cache.output.shape)
    if field.out_activation == "logistic":
        y = cache.output
        g = g * y * (1.0 - y)

    grads: list[np.ndarray] = []
    for i in range(len(field.weights) - 1, -1, -1):
        a_in = cache.inputs[i]
        grads.append(g.sum(axis=0))        # db
        grads.append(a_in.T @ g)           # dW
        if i > 0:
            g = (g @ field.weights[i].T) * expit(cache.pre[i - 1])

    grads.reverse()
    return grads


class Adam:
    """Adam with bias correction, updating parameter arrays in place"""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def field_to_bytes(field: MlpField) -> bytes:
    parts = [
        BLOB_MAGIC,
        struct.pack("<II", len(field.weights), _ACTIVATIONS[field.out_activation]),
        np.array([*field.center, field.scale], dtype="<f4").tobytes(),
        np.array([w.shape for w in field.weights], dtype="<u4").tobytes(),
    ]
    for w, b in zip(field.weights, field.biases):
        parts.append(w.astype("<f4").tobytes())
        parts.append(b.astype("<f4").tobytes())
    return b"".join(parts)


def field_from_bytes(data: bytes) -> MlpField:
    if data[:8] != BLOB_MAGIC:
        raise SchemaError("Not a field blob (bad magic)")
    try:
        n_layers, act_code = struct.unpack_from("<II", data, 8)
        offset = 16
        norm = np.frombuffer(data, dtype="<f4", count=4, offset=offset).astype(np.float64)
        offset += 16
        dims = np.frombuffer(data, dtype="<u4", count=2 * n_layers, offset=offset).reshape(n_layers, 2)
        offset += 8 * n_layers

        weights, biases = [], []
        for fan_in, fan_out in dims:
            count = int(fan_in) * int(fan_out)
            w = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            b = np.frombuffer(data, dtype="<f4", count=int(fan_out), offset=offset)
            offset += 4 * int(fan_out)
            weights.append(w.reshape(int(fan_in), int(fan_out)).astype(np.float64))
            biases.append(b.astype(np.float64))
    except (struct.error, ValueError) as e:
        raise SchemaError(f"Truncated field blob: {e}")

    if offset != len(data):
        raise SchemaError("Field blob has trailing bytes")
    activation = {v: k for k, v in _ACTIVATIONS.items()}.get(act_code)
    if activation is None:
        raise SchemaError(f"Unknown output activation code {act_code}")
    return MlpField(weights, biases, activation, norm[:3], float(norm[3]))


def save_field(path: str | Path, field: MlpField) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(field_to_bytes(field))


def load_field(path: str | Path) -> MlpField:
    return field_from_bytes(Path(path).read_bytes())
