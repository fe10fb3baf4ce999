"""Linear-probe and MLP classification heads with explicit forward/backward
passes, plus the SGD protocol (momentum, optional Nesterov, weight decay,
global gradient-norm clipping) and a byte-exact checkpoint format.

No autodiff: backward() implements the chain rule by hand and is validated
against the finite-difference oracle in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, FormatError, InvalidInputError
from .numerics import as_matrix

ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_MAGIC = b"NLMP"
CHECKPOINT_VERSION = 1


@dataclass
class Architecture:
    """Head shape: a bare linear layer, or an MLP with ``depth`` dense layers
    (depth-1 hidden layers of ``hidden`` units each)."""

    kind: str = "linear"
    depth: int = 3
    hidden: int = 256
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise InvalidInputError(f"unknown architecture kind {self.kind!r}")
        if self.depth < 1 or self.hidden < 1:
            raise InvalidInputError("depth and hidden width must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")


@dataclass
class ModelParams:
    """Weight matrices (fan_in x fan_out) and bias vectors, one per layer."""

    weights: list
    biases: list
    activation: str = "relu"

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def assign_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for arr in list(self.weights) + list(self.biases):
            arr[...] = flat[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size


def init_params(arch: Architecture, input_dim: int, num_classes: int,
                seed: int) -> ModelParams:
    """Build a head with fan-in-scaled symmetric-uniform weights and zero
    biases, deterministic for a given seed."""
    if input_dim < 1 or num_classes < 1:
        raise InvalidInputError("input_dim and num_classes must be >= 1")
    if arch.kind == "linear" or arch.depth == 1:
        dims = [input_dim, num_classes]
    else:
        dims = [input_dim] + [arch.hidden] * (arch.depth - 1) + [num_classes]
    gen = np.random.Generator(np.random.Philox(key=seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(gen.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, arch.activation)


@dataclass
class ForwardCache:
    """Activations saved by forward() for the matching backward()."""

    params: ModelParams
    inputs: list  # input to each layer (post-activation of the previous one)
    preacts: list  # pre-activation of each hidden layer


def forward(params: ModelParams, X) -> tuple[np.ndarray, ForwardCache]:
    """Logits (n x num_classes) plus the cache needed by backward()."""
    a = as_matrix(X, "X")
    if a.shape[1] != params.weights[0].shape[0]:
        raise InvalidInputError(
            f"X has {a.shape[1]} features, model expects {params.weights[0].shape[0]}"
        )
    inputs, preacts = [], []
    last = params.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w + b
        if i < last:
            preacts.append(z)
            a = np.tanh(z) if params.activation == "tanh" else np.maximum(z, 0.0)
        else:
            a = z
    return a, ForwardCache(params, inputs, preacts)


def backward(params: ModelParams, cache: ForwardCache, grad_wrt_logits):
    """Exact parameter gradients of the scalar whose logit gradient is given.

    Returns (weight_grads, bias_grads) with the same shapes as the params.
    """
    if cache.params is not params:
        raise InvalidInputError("cache does not belong to these parameters")
    g = as_matrix(grad_wrt_logits, "grad_wrt_logits")
    if g.shape != (cache.inputs[0].shape[0], params.biases[-1].shape[0]):
        raise InvalidInputError(
            f"grad_wrt_logits shape {g.shape} does not match the forward pass"
        )
    weight_grads = [None] * params.num_layers
    bias_grads = [None] * params.num_layers
    for i in range(params.num_layers - 1, -1, -1):
        weight_grads[i] = cache.inputs[i].T @ g
        bias_grads[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i].T
            z = cache.preacts[i - 1]
            if params.activation == "tanh":
                g = g * (1.0 - np.tanh(z) ** 2)
            else:
                g = g * (z > 0.0)
    return weight_grads, bias_grads


def global_grad_norm(grads) -> float:
    """L2 norm over every entry of a (weight_grads, bias_grads) pair."""
    weight_grads, bias_grads = grads
    total = 0.0
    for arr in list(weight_grads) + list(bias_grads):
        total += float(np.sum(np.asarray(arr) ** 2))
    return float(np.sqrt(total))


def clip_global_norm(grads, clip_norm: float):
    """Scale all gradients by clip_norm/norm when the global L2 norm exceeds
    clip_norm; otherwise return them unchanged."""
    if clip_norm <= 0:
        raise InvalidInputError("clip_norm must be > 0")
    norm = global_grad_norm(grads)
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    weight_grads, bias_grads = grads
    return ([w * scale for w in weight_grads], [b * scale for b in bias_grads])


@dataclass
class OptimState:
    """SGD hyperparameters and momentum buffers (created on first step)."""

    lr: float = 0.001
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 0.0
    clip_norm: float = 5.0
    weight_buffers: list = field(default_factory=list)
    bias_buffers: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidInputError("lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be >= 0")
        if self.clip_norm <= 0:
            raise InvalidInputError("clip_norm must be > 0")


def sgd_step(params: ModelParams, state: OptimState, grads) -> None:
    """One SGD update, in place.

    g <- grad + weight_decay * param; buffer <- momentum * buffer + g;
    update = buffer (or g + momentum * buffer with Nesterov);
    param <- param - lr * update.
    """
    weight_grads, bias_grads = grads
    if not state.weight_buffers:
        state.weight_buffers = [np.zeros_like(w) for w in params.weights]
        state.bias_buffers = [np.zeros_like(b) for b in params.biases]
    for arrs, gs, bufs in (
        (params.weights, weight_grads, state.weight_buffers),
        (params.biases, bias_grads, state.bias_buffers),
    ):
        for arr, grad, buf in zip(arrs, gs, bufs):
            grad = np.asarray(grad)
            if not np.all(np.isfinite(grad)):
                raise DivergenceError("non-finite gradient in sgd_step")
            g = grad + state.weight_decay * arr
            buf *= state.momentum
            buf += g
            update = g + state.momentum * buf if state.nesterov else buf
            arr -= state.lr * update


# ---------------------------------------------------------------------------
# Checkpoints. Byte layout (all little-endian):
#   bytes 0-3   magic "NLMP"
#   u32         version (1)
#   u32         activation code (0 = relu, 1 = tanh)
#   u32         layer count L
#   L x (u64 fan_in, u64 fan_out)
#   per layer:  fan_in*fan_out f64 weights row-major, then fan_out f64 biases


def save_params(params: ModelParams, path) -> None:
    """Write a parameter checkpoint in the documented flat binary layout."""
    act_code = ACTIVATIONS.index(params.activation)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, act_code, params.num_layers))
        for w in params.weights:
            fh.write(struct.pack("<QQ", w.shape[0], w.shape[1]))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> ModelParams:
    """Read a checkpoint written by save_params."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}")
    version, act_code, n_layers = struct.unpack_from("<III", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if act_code >= len(ACTIVATIONS):
        raise FormatError(f"unknown activation code {act_code}")
    offset = 16
    shapes = []
    for _ in range(n_layers):
        fan_in, fan_out = struct.unpack_from("<QQ", data, offset)
        shapes.append((fan_in, fan_out))
        offset += 16
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        w_bytes = 8 * fan_in * fan_out
        b_bytes = 8 * fan_out
        if offset + w_bytes + b_bytes > len(data):
            raise FormatError("truncated checkpoint")
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        weights.append(w.reshape(fan_in, fan_out).copy())
        offset += w_bytes
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        biases.append(b.copy())
        offset += b_bytes
    if offset != len(data):
        raise FormatError("trailing bytes after checkpoint payload")
    return ModelParams(weights, biases, ACTIVATIONS[act_code])
