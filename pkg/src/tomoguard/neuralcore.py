"""Small dense-network substrate: parameters, forward passes, numeric gradients.

There is no autodiff here on purpose. The training objective runs through a
discrete projection and sampled posteriors, so gradients are estimated from
function values (central differences or SPSA).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InvariantViolation, NonFiniteOutput, NonFiniteValue
from .topology import as_rng

ACTIVATIONS = ("relu", "identity")


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvariantViolation(f"unknown activation {self.activation!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionMismatch("bias must match the weight's output dimension")


class DenseNet:
    """A chain of affine layers with ReLU or identity activations."""

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if not layers:
            raise InvariantViolation("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weight.shape[0] != b.weight.shape[1]:
                raise DimensionMismatch("adjacent layer dimensions do not chain")
        for layer in layers:
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise NonFiniteValue("network weights must be finite")
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def dims(self) -> tuple:
        return (self.in_dim, *(layer.weight.shape[0] for layer in self.layers))

    def named_arrays(self, prefix: str = "") -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}{i}.weight"] = layer.weight
            out[f"{prefix}{i}.bias"] = layer.bias
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray], prefix: str = "") -> "DenseNet":
        return DenseNet([
            DenseLayer(arrays[f"{prefix}{i}.weight"], arrays[f"{prefix}{i}.bias"], layer.activation)
            for i, layer in enumerate(self.layers)
        ])


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector or a batch of row vectors."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != net.in_dim:
        raise DimensionMismatch(f"input has dimension {h.shape[-1]}, network expects {net.in_dim}")
    for layer in net.layers:
        h = h @ layer.weight.T + layer.bias
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
    if not np.all(np.isfinite(h)):
        raise NonFiniteOutput("network produced a non-finite value")
    return h


def init_params(dims: Sequence[int], rng_seed=None, activations: Sequence[str] | None = None) -> DenseNet:
    """Glorot-uniform weights, zero biases.

    Hidden layers default to ReLU and the output layer to identity.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise InvariantViolation(f"invalid layer dimensions {dims}")
    n_layers = len(dims) - 1
    if activations is None:
        activations = ["relu"] * (n_layers - 1) + ["identity"]
    if len(activations) != n_layers:
        raise InvariantViolation("one activation per layer is required")
    rng = as_rng(rng_seed)
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(DenseLayer(rng.uniform(-a, a, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return DenseNet(layers)


class ParamVector:
    """Flat float64 view of a set of named arrays with a stable index map."""

    def __init__(self, values: np.ndarray, index: Sequence[tuple[str, tuple, int]]):
        self.values = np.asarray(values, dtype=np.float64)
        self.index = [(name, tuple(shape), int(offset)) for name, shape, offset in index]
        size = sum(int(np.prod(s)) for _, s, _ in self.index)
        if self.values.shape != (size,):
            raise DimensionMismatch(f"{self.values.size} values for an index of size {size}")

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "ParamVector":
        index, chunks, offset = [], [], 0
        for name in arrays:
            a = np.asarray(arrays[name], dtype=np.float64)
            index.append((name, a.shape, offset))
            chunks.append(a.ravel())
            offset += a.size
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values, index)

    def to_arrays(self, copy: bool = True) -> dict:
        """Structured arrays; ``copy=False`` returns read-only views into ``values``."""
        out = {}
        for name, shape, off in self.index:
            a = self.values[off: off + int(np.prod(shape))].reshape(shape)
            if copy:
                a = a.copy()
            else:
                a = a.view()
                a.setflags(write=False)
            out[name] = a
        return out

    def with_values(self, values) -> "ParamVector":
        return ParamVector(values, self.index)

    def __len__(self):
        return self.values.size


def numeric_gradient(f: Callable[[np.ndarray], float], theta, h: float = 1e-4,
                     method: str = "central", rng=None, probes: int = 2,
                     batch_f: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Finite-difference gradient of scalar ``f`` at ``theta``.

    ``method="central"`` perturbs one coordinate at a time; ``method="spsa"``
    averages ``probes`` simultaneous Rademacher perturbations. With SPSA,
    ``batch_f`` (rows of parameters -> values) evaluates all probes at once.
    """
    theta = np.array(theta.values if isinstance(theta, ParamVector) else theta, dtype=np.float64)
    if not np.isfinite(f(theta)):
        raise NonFiniteValue("objective is not finite at theta")
    grad = np.zeros_like(theta)
    if method == "central":
        for i in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            fu, fd = f(up), f(dn)
            if not (np.isfinite(fu) and np.isfinite(fd)):
                raise NonFiniteValue(f"objective not finite near coordinate {i}")
            grad[i] = (fu - fd) / (2 * h)
        return grad
    if method == "spsa":
        rng = as_rng(rng)
        if batch_f is not None:
            deltas = rng.choice((-1.0, 1.0), size=(probes, theta.size))
            vals = np.asarray(batch_f(np.concatenate([theta + h * deltas, theta - h * deltas])))
            if not np.all(np.isfinite(vals)):
                raise NonFiniteValue("objective not finite at an SPSA probe")
            diffs = (vals[:probes] - vals[probes:]) / (2 * h)
            return diffs @ deltas / probes
        for _ in range(probes):
            delta = rng.choice((-1.0, 1.0), size=theta.size)
            fu, fd = f(theta + h * delta), f(theta - h * delta)
            if not (np.isfinite(fu) and np.isfinite(fd)):
                raise NonFiniteValue("objective not finite at an SPSA probe")
            grad += (fu - fd) / (2 * h) * delta
        return grad / probes
    raise InvariantViolation(f"unknown gradient method {method!r}")


class Adam:
    """Bias-corrected Adam update on flat parameter vectors."""

    def __init__(self, size: int, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- checkpoint file: one JSON header line, then little-endian float64 data --

def forward_batch(net: DenseNet, weights: Sequence[tuple], x: np.ndarray) -> np.ndarray:
    """Evaluate ``B`` parameter sets of one architecture on ``(B, n, in)`` inputs.

    ``weights`` holds one ``(W, b)`` pair per layer with leading batch axes
    ``(B, out, in)`` and ``(B, out)``.
    """
    h = np.asarray(x, dtype=np.float64)
    for layer, (W, b) in zip(net.layers, weights):
        h = np.matmul(h, W.transpose(0, 2, 1)) + b[:, None, :]
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
    if not np.all(np.isfinite(h)):
        raise NonFiniteOutput("network produced a non-finite value")
    return h


def save_checkpoint(path, params: ParamVector, meta: Mapping | None = None) -> None:
    header = {
        "format": "tomoguard-checkpoint",
        "version": 1,
        "dtype": "<f8",
        "count": int(params.values.size),
        "index": [[name, list(shape), off] for name, shape, off in params.index],
        "meta": dict(meta or {}),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    blob += params.values.astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def load_checkpoint(path):
    """Return ``(ParamVector, meta)`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    head, sep, body = raw.partition(b"\n")
    if not sep:
        raise InvariantViolation("checkpoint has no header line")
    header = json.loads(head.decode("utf-8"))
    if header.get("format") != "tomoguard-checkpoint" or header.get("dtype") != "<f8":
        raise InvariantViolation("not a tomoguard checkpoint")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if values.size != header["count"]:
        raise DimensionMismatch("checkpoint payload length does not match its header")
    index = [(name, tuple(shape), off) for name, shape, off in header["index"]]
    return ParamVector(values, index), header.get("meta", {})
