"""Dense networks over flat float32 parameter vectors.

Matrix products accumulate sequentially over the inner dimension (one
rounded float32 multiply and one rounded add per term, bias added last), so a
forward or backward pass is bit-reproducible on a given platform regardless of
the BLAS build.
"""

from dataclasses import dataclass, field
import hashlib
import math
import struct

import numpy as np

from ..errors import ConfigurationError, ShapeError
from . import _kernels

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "identity")

# Kind codes used by the binary layout descriptor.
KIND_CODES = {"dense": 0, "relu": 1, "leaky_relu": 2, "tanh": 3, "sigmoid": 4, "identity": 5}
_CODE_KINDS = {v: k for k, v in KIND_CODES.items()}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    activation: str = "identity"
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "activation"):
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigurationError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.kind == "activation":
            if self.activation not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {self.activation!r}")
            if self.in_dim != self.out_dim:
                raise ConfigurationError("activation layers must preserve width")

    @property
    def n_params(self):
        if self.kind == "dense":
            return self.in_dim * self.out_dim + self.out_dim
        return 0

    @property
    def kind_code(self):
        if self.kind == "dense":
            return KIND_CODES["dense"]
        code = KIND_CODES[self.activation]
        if self.activation == "leaky_relu":
            # slope in thousandths, packed above the low byte
            code |= int(round(self.alpha * 1000)) << 8
        return code


def dense(in_dim, out_dim):
    return LayerSpec("dense", in_dim, out_dim)


def activation(name, dim, alpha=0.2):
    return LayerSpec("activation", dim, dim, name, alpha if name == "leaky_relu" else 0.0)


def mlp(widths, hidden="relu", output="identity", alpha=0.2):
    """Dense stack ``widths[0] -> ... -> widths[-1]`` with activations between."""
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(dense(a, b))
        act = output if i == len(widths) - 2 else hidden
        if act != "identity":
            layers.append(activation(act, b, alpha))
    return tuple(layers)


def validate_layers(layers):
    layers = tuple(layers)
    if not layers:
        raise ConfigurationError("network needs at least one layer")
    for prev, cur in zip(layers[:-1], layers[1:]):
        if prev.out_dim != cur.in_dim:
            raise ConfigurationError(
                f"dimension mismatch: {prev.kind} outputs {prev.out_dim}, next layer expects {cur.in_dim}"
            )
    return layers


def count_params(layers):
    return sum(l.n_params for l in layers)


@dataclass(frozen=True)
class LayoutEntry:
    spec: LayerSpec
    offset: int
    length: int


def make_layout(layers):
    layout, offset = [], 0
    for spec in validate_layers(layers):
        layout.append(LayoutEntry(spec, offset, spec.n_params))
        offset += spec.n_params
    return tuple(layout)


def layout_descriptor(layout):
    """Little-endian u32 count followed by (kind, in, out, offset, length) per entry."""
    parts = [struct.pack("<I", len(layout))]
    for e in layout:
        parts.append(struct.pack("<5I", e.spec.kind_code, e.spec.in_dim, e.spec.out_dim, e.offset, e.length))
    return b"".join(parts)


def layers_from_descriptor(entries):
    """Rebuild layer specs from decoded ``(kind, in, out, offset, length)`` tuples."""
    layers = []
    for kind, i, o, _, _ in entries:
        name = _CODE_KINDS.get(kind & 0xFF)
        if name is None:
            raise ConfigurationError(f"unknown layer kind code {kind}")
        if name == "dense":
            layers.append(dense(i, o))
        else:
            layers.append(activation(name, i, (kind >> 8) / 1000.0))
    return tuple(layers)


def arch_digest(layers):
    """64-bit digest of a layer sequence (blake2b over the layout descriptor)."""
    desc = layout_descriptor(make_layout(layers))
    return int.from_bytes(hashlib.blake2b(desc, digest_size=8).digest(), "little")


@dataclass(frozen=True, eq=False)
class ParamVector:
    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        total = sum(e.length for e in self.layout)
        if total != values.size:
            raise ShapeError(f"layout covers {total} values, vector has {values.size}")

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return isinstance(other, ParamVector) and self.bit_equal(other)

    __hash__ = None

    @property
    def layers(self):
        return tuple(e.spec for e in self.layout)

    def bit_equal(self, other):
        return (
            self.layers == other.layers
            and self.values.shape == other.values.shape
            and np.array_equal(self.values.view(np.uint32), other.values.view(np.uint32))
        )

    def bit_diff_count(self, other):
        """Number of float32 slots whose bit patterns differ."""
        return int(np.count_nonzero(self.values.view(np.uint32) != other.values.view(np.uint32)))

    def digest(self):
        return hashlib.blake2b(layout_descriptor(self.layout) + self.values.tobytes(), digest_size=16).hexdigest()

    def dense_blocks(self):
        """(weights [in, out], bias [out]) read-only views, one per dense layer."""
        blocks = []
        for e in self.layout:
            if e.spec.kind != "dense":
                continue
            i, o = e.spec.in_dim, e.spec.out_dim
            w = self.values[e.offset:e.offset + i * o].reshape(i, o)
            b = self.values[e.offset + i * o:e.offset + e.length]
            blocks.append((w, b))
        return blocks

    def replace_values(self, values):
        return ParamVector(values, self.layout)

    def zeros_like(self):
        return ParamVector(np.zeros_like(self.values), self.layout)

    def l2_distance(self, other):
        d = self.values.astype(np.float64) - other.values.astype(np.float64)
        return math.sqrt(math.fsum(d * d))


def param_vector(layers, values):
    return ParamVector(values, make_layout(layers))


def init_params(layers, rng, bias_range=0.0):
    """Glorot-uniform weights, then biases (zero unless ``bias_range`` > 0).

    The stream is consumed layer by layer: all weights of a dense layer in
    row-major order, then its biases when ``bias_range`` is nonzero.
    """
    layout = make_layout(layers)
    values = np.zeros(sum(e.length for e in layout), dtype=np.float32)
    for e in layout:
        if e.spec.kind != "dense":
            continue
        i, o = e.spec.in_dim, e.spec.out_dim
        limit = math.sqrt(6.0 / (i + o))
        values[e.offset:e.offset + i * o] = rng.uniform(-limit, limit, (i * o,))
        if bias_range:
            values[e.offset + i * o:e.offset + e.length] = rng.uniform(-bias_range, bias_range, (o,))
    return ParamVector(values, layout)


@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple
    params: ParamVector = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", validate_layers(self.layers))
        if self.params.layers != self.layers:
            raise ShapeError("parameter layout does not match network layers")

    @classmethod
    def initialize(cls, layers, rng, bias_range=0.0):
        layers = validate_layers(layers)
        return cls(layers, init_params(layers, rng, bias_range))

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def with_params(self, params):
        return Network(self.layers, params)

    def bit_equal(self, other):
        return self.params.bit_equal(other.params)

    def __call__(self, x):
        return forward(self, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(spec, x):
    name = spec.activation
    if name == "relu":
        return np.maximum(x, np.float32(0.0))
    if name == "leaky_relu":
        return np.where(x > 0, x, np.float32(spec.alpha) * x)
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return _sigmoid(x)
    return x


def _activate_grad(spec, x, y, g):
    name = spec.activation
    if name == "relu":
        return np.where(x > 0, g, np.float32(0.0))
    if name == "leaky_relu":
        return np.where(x > 0, g, np.float32(spec.alpha) * g)
    if name == "tanh":
        return g * (np.float32(1.0) - y * y)
    if name == "sigmoid":
        return g * y * (np.float32(1.0) - y)
    return g


def _as_input(net, x):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"expected input of shape (batch, {net.in_dim}), got {x.shape}")
    return x


def _trace(net, x):
    acts = [x]
    blocks = iter(net.params.dense_blocks())
    for spec in net.layers:
        if spec.kind == "dense":
            w, b = next(blocks)
            x = _kernels.matmul(x, w) + b
        else:
            x = _activate(spec, x)
        acts.append(x)
    return acts


def forward(net, x):
    """Pure forward pass; returns float32 ``[batch, out_dim]``."""
    return _trace(net, _as_input(net, x))[-1]


def backward(net, x, upstream_grad):
    """Reverse-mode gradients of ``sum(forward(net, x) * upstream_grad)``.

    Returns ``(param_grads, input_grads)``; ``param_grads`` shares the
    network's layout.
    """
    x = _as_input(net, x)
    g = np.asarray(upstream_grad, dtype=np.float32)
    if g.shape != (x.shape[0], net.out_dim):
        raise ShapeError(f"upstream gradient shape {g.shape} != {(x.shape[0], net.out_dim)}")
    acts = _trace(net, x)
    grads = np.zeros(len(net.params), dtype=np.float32)
    blocks = net.params.dense_blocks()
    layout = net.params.layout
    bi = len(blocks)
    for li in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[li]
        if spec.kind == "dense":
            bi -= 1
            w, _ = blocks[bi]
            e = layout[li]
            dw, db = _kernels.weight_grad(acts[li], g)
            grads[e.offset:e.offset + dw.size] = dw.ravel()
            grads[e.offset + dw.size:e.offset + e.length] = db
            g = _kernels.matmul_t(g, w)
        else:
            g = _activate_grad(spec, acts[li], acts[li + 1], g)
    return ParamVector(grads, layout), g
