"""Fully connected ReLU network with hand-written forward and backward passes.

All weights and biases live in one flat buffer; the per-layer arrays are
views into it. The optimizer updates the flat buffer directly, and the
checkpoint format is that buffer preceded by a JSON header line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, SchemaError
from .sampling import RngStream

CHECKPOINT_MAGIC = "strank-mlp"


def layer_sizes_for(input_dim: int, hidden_dim: int, output_dim: int) -> list[int]:
    """``[d, h, h, g]`` for the three-layer net, ``[d, g]`` when ``hidden_dim == 0``."""
    if input_dim < 1 or output_dim < 1 or hidden_dim < 0:
        raise ArgumentError("input/output dims must be >= 1 and hidden_dim >= 0")
    if hidden_dim == 0:
        return [input_dim, output_dim]
    return [input_dim, hidden_dim, hidden_dim, output_dim]


def _views(flat: np.ndarray, sizes: list[int]):
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out])
        offset += fan_out
    if offset != flat.size:
        raise ArgumentError(f"flat buffer has {flat.size} entries, layer sizes need {offset}")
    return weights, biases


def n_parameters(sizes: list[int]) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass(eq=False)
class MlpParams:
    """Layer ``k`` maps ``h -> h @ weights[k] + biases[k]`` (row-vector convention)."""

    layer_sizes: list[int]
    flat: np.ndarray

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) not in (2, 4):
            raise ArgumentError("network must have one or three linear layers")
        self.weights, self.biases = _views(self.flat, self.layer_sizes)

    @classmethod
    def zeros(cls, layer_sizes, dtype=np.float64):
        return cls(list(layer_sizes), np.zeros(n_parameters(layer_sizes), dtype=dtype))

    @property
    def dtype(self):
        return self.flat.dtype

    def copy(self):
        return type(self)(list(self.layer_sizes), self.flat.copy())

    def astype(self, dtype):
        return type(self)(list(self.layer_sizes), self.flat.astype(dtype, copy=True))

    def __eq__(self, other):
        return (
            isinstance(other, MlpParams)
            and self.layer_sizes == other.layer_sizes
            and np.array_equal(self.flat, other.flat)
        )


class GradBuffer(MlpParams):
    """Gradient of a scalar loss, shape-matched to an :class:`MlpParams`."""


@dataclass
class ForwardCache:
    layer_sizes: list[int]
    inputs: list[np.ndarray]  # input to each linear layer
    preacts: list[np.ndarray]  # pre-activation of each hidden layer


INIT_SCHEMES = ("uniform", "he")


def init_params(
    input_dim: int, hidden_dim: int, output_dim: int, rng: RngStream, dtype=np.float64, scheme: str = "uniform"
) -> MlpParams:
    """Random initial parameters.

    ``uniform`` (default) draws weights and biases from
    ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, the usual default for linear layers
    in deep learning frameworks. ``he`` draws He-normal weights
    (std ``sqrt(2 / fan_in)``) with zero biases. With a low-dimensional input
    on ``[0, 1]`` zero biases put every first-layer ReLU kink at the origin,
    so the initial network is linear on the whole domain.
    """
    if scheme not in INIT_SCHEMES:
        raise ArgumentError(f"unknown init scheme {scheme!r}; choose from {INIT_SCHEMES}")
    sizes = layer_sizes_for(input_dim, hidden_dim, output_dim)
    params = MlpParams.zeros(sizes, dtype=np.float64)
    for w, b in zip(params.weights, params.biases):
        fan_in = w.shape[0]
        if scheme == "he":
            w[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=w.shape)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
    return params.astype(dtype) if dtype != np.float64 else params


def _matmul(a, b):
    # numpy's GEMM path is slow for rank-1 products; broadcast instead
    if a.shape[1] == 1:
        return a * b
    return a @ b


def forward(params: MlpParams, X) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=params.dtype)
    if X.ndim != 2 or X.shape[1] != params.layer_sizes[0]:
        raise ArgumentError(f"expected input of width {params.layer_sizes[0]}, got shape {X.shape}")
    inputs, preacts = [], []
    h = X
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = _matmul(h, w)
        z += b
        if k == last:
            return z, ForwardCache(list(params.layer_sizes), inputs, preacts)
        preacts.append(z)
        h = np.maximum(z, 0)


def backward(params: MlpParams, cache: ForwardCache, dout) -> GradBuffer:
    """Gradient w.r.t. all parameters given ``dL/d(output)``.

    The ReLU derivative at exactly zero is taken as zero.
    """
    if cache.layer_sizes != params.layer_sizes or len(cache.inputs) != len(params.weights):
        raise ArgumentError("forward cache does not match the parameter layout")
    dout = np.asarray(dout, dtype=params.dtype)
    batch = cache.inputs[0].shape[0]
    if dout.shape != (batch, params.layer_sizes[-1]):
        raise ArgumentError(f"output gradient shape {dout.shape} != {(batch, params.layer_sizes[-1])}")
    grads = GradBuffer.zeros(params.layer_sizes, dtype=params.dtype)
    delta = dout
    for k in range(len(params.weights) - 1, -1, -1):
        h = cache.inputs[k]
        np.matmul(h.T, delta, out=grads.weights[k])
        np.sum(delta, axis=0, out=grads.biases[k])
        if k == 0:
            break
        delta = _matmul(delta, params.weights[k].T)
        delta *= cache.preacts[k - 1] > 0
    return grads


def save_params(params: MlpParams, path) -> None:
    """Write a JSON header line followed by the little-endian float64 buffer."""
    header = {"format": CHECKPOINT_MAGIC, "dtype": "<f8", "layer_sizes": params.layer_sizes}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint: {path}")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        raise SchemaError(f"{path}: unreadable checkpoint header") from None
    if header.get("format") != CHECKPOINT_MAGIC:
        raise SchemaError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    sizes = header["layer_sizes"]
    flat = np.frombuffer(raw[newline + 1 :], dtype="<f8").astype(np.float64)
    if flat.size != n_parameters(sizes):
        raise SchemaError(f"{path}: expected {n_parameters(sizes)} values, found {flat.size}")
    return MlpParams(sizes, flat)
