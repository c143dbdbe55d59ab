"""Dense numeric core: small MLPs with hand-written backprop, Adam, Gaussian densities.

Tensors are plain ``numpy.ndarray`` objects in float64. Every public entry point
checks shapes before touching data and refuses to return NaN/Inf.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")
_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}
_LOG_2PI = float(np.log(2.0 * np.pi))


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def as_tensor(x, dim: int | None = None) -> np.ndarray:
    """Coerce to a float64 array, optionally checking the trailing dimension."""
    arr = np.asarray(x, dtype=np.float64)
    if dim is not None and (arr.ndim == 0 or arr.shape[-1] != dim):
        raise ShapeError(f"expected trailing dimension {dim}, got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, what: str = "value") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what}")
    return x


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, act: str, g: np.ndarray) -> np.ndarray:
    # a is activate(z); tanh' = 1 - a^2 avoids recomputing tanh
    if act == "relu":
        return g * (z > 0.0)
    if act == "tanh":
        return g * (1.0 - a * a)
    return g


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    layers: list[Layer]
    frozen: bool = False

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in _ACT_CODE:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeError(f"layer {i}: bias shape {layer.bias.shape} vs out dim {layer.out_dim}")
            if i and self.layers[i - 1].out_dim != layer.in_dim:
                raise ShapeError(
                    f"layer {i}: in dim {layer.in_dim} != previous out dim {self.layers[i - 1].out_dim}"
                )

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str] | str,
        rng: np.random.Generator,
        frozen: bool = False,
    ) -> "Mlp":
        """Glorot-uniform weights, zero biases. ``activations`` has one entry per layer."""
        n = len(sizes) - 1
        if n < 1 or any(int(s) < 1 for s in sizes):
            raise ShapeError(f"bad layer sizes {list(sizes)}")
        if isinstance(activations, str):
            activations = [activations] * n
        if len(activations) != n:
            raise ShapeError(f"{len(activations)} activations for {n} layers")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Layer(rng.uniform(-lim, lim, (fan_out, fan_in)), np.zeros(fan_out), act))
        return cls(layers, frozen)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def param_count(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self, frozen: bool | None = None) -> "Mlp":
        layers = [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return Mlp(layers, self.frozen if frozen is None else frozen)

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise ShapeError("parameter list length mismatch")
        for layer, w, b in zip(self.layers, params[::2], params[1::2]):
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeError("parameter shape mismatch")
            layer.weight[...] = w
            layer.bias[...] = b

    def digest(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    def forward(self, x) -> np.ndarray:
        return mlp_forward(self, x)

    def __call__(self, x) -> np.ndarray:
        return mlp_forward(self, x)


def _forward_trace(net: Mlp, x: np.ndarray):
    pre, post = [], [x]
    h = x
    for layer in net.layers:
        z = h @ layer.weight.T + layer.bias
        h = _activate(z, layer.activation)
        pre.append(z)
        post.append(h)
    return pre, post


def mlp_forward(net: Mlp, x) -> np.ndarray:
    """Evaluate the network on a vector (in,) or a batch (n, in)."""
    x = as_tensor(x, net.in_dim)
    h = x
    for layer in net.layers:
        h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
    return check_finite(h, "network output")


def mlp_backward(net: Mlp, x, output_grad) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of ``sum(output * output_grad)`` w.r.t. parameters and input.

    Returns ``(grads, input_grad)`` with ``grads`` ordered like ``net.params()``.
    Batched inputs accumulate (sum) parameter gradients over rows.
    """
    x = as_tensor(x, net.in_dim)
    g = as_tensor(output_grad)
    expected = x.shape[:-1] + (net.out_dim,)
    if g.shape != expected:
        raise ShapeError(f"output_grad shape {g.shape}, expected {expected}")
    single = x.ndim == 1
    if single:
        x, g = x[None, :], g[None, :]
    pre, post = _forward_trace(net, x)
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        g = _activation_grad(pre[i], post[i + 1], layer.activation, g)
        grads[2 * i] = g.T @ post[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return grads, (g[0] if single else g)


@dataclass
class Adam:
    """Adam with bias correction over an arbitrary list of parameter arrays."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
        for p, g in zip(params, grads):
            if p.shape != np.shape(g):
                raise ShapeError(f"gradient shape {np.shape(g)} vs parameter {p.shape}")
            check_finite(np.asarray(g), "gradient")
        if not self.first_moment:
            self.first_moment = [np.zeros_like(p) for p in params]
            self.second_moment = [np.zeros_like(p) for p in params]
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def copy(self) -> "Adam":
        return Adam(
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.eps,
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.step_count,
        )


# generic alias used by optimizer_step callers
OptimizerState = Adam


def optimizer_step(net: Mlp, grads: Sequence[np.ndarray], state: Adam) -> Mlp:
    """Apply one Adam update to ``net`` in place and return it."""
    if net.frozen:
        raise ValueError("cannot update a frozen network")
    state.step(net.params(), grads)
    return net


def gaussian_log_prob(mean, log_std, x) -> np.ndarray:
    """Diagonal Gaussian log-density summed over the last axis."""
    mean, log_std, x = (np.asarray(v, dtype=np.float64) for v in (mean, log_std, x))
    try:
        shape = np.broadcast_shapes(mean.shape, log_std.shape, x.shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    if mean.shape[-1:] != shape[-1:] or x.shape[-1:] != shape[-1:] or log_std.shape[-1:] != shape[-1:]:
        raise ShapeError("trailing dimensions differ")
    for v, name in ((mean, "mean"), (log_std, "log_std"), (x, "x")):
        check_finite(v, name)
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


# ---------------------------------------------------------------------------
# serialization
#
# blob := b"MLP1" u32 n_layers (u32 in, u32 out, u8 act){n} f64le data
# data is every layer's weight (row-major) followed by its bias.

_MAGIC = b"MLP1"


def dump_mlp(net: Mlp) -> bytes:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        buf.write(struct.pack("<IIB", layer.in_dim, layer.out_dim, _ACT_CODE[layer.activation]))
    for p in net.params():
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return buf.getvalue()


def load_mlp(blob: bytes, frozen: bool = False) -> Mlp:
    if blob[:4] != _MAGIC:
        raise ValueError("not an MLP blob")
    (n,) = struct.unpack_from("<I", blob, 4)
    off = 8
    shapes = []
    for _ in range(n):
        fan_in, fan_out, code = struct.unpack_from("<IIB", blob, off)
        off += 9
        shapes.append((fan_in, fan_out, ACTIVATIONS[code]))
    layers = []
    for fan_in, fan_out, act in shapes:
        w = np.frombuffer(blob, "<f8", fan_in * fan_out, off).reshape(fan_out, fan_in)
        off += 8 * w.size
        b = np.frombuffer(blob, "<f8", fan_out, off)
        off += 8 * b.size
        layers.append(Layer(w.astype(np.float64), b.astype(np.float64), act))
    if off != len(blob):
        raise ValueError("trailing bytes after MLP blob")
    return Mlp(layers, frozen)


def save_checkpoint(path, nets: dict[str, Mlp], vectors: dict[str, np.ndarray] | None = None) -> None:
    """Write named networks (and optional named vectors, e.g. log-std) to one file."""
    with open(path, "wb") as fh:
        entries = [(k, b"M", dump_mlp(v)) for k, v in nets.items()]
        for k, v in (vectors or {}).items():
            entries.append((k, b"V", np.ascontiguousarray(v, dtype="<f8").ravel().tobytes()))
        fh.write(b"CKPT")
        fh.write(struct.pack("<I", len(entries)))
        for name, kind, payload in entries:
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw + kind + struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_checkpoint(path) -> tuple[dict[str, Mlp], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"CKPT":
        raise ValueError(f"{path}: not a checkpoint")
    (count,) = struct.unpack_from("<I", blob, 4)
    off = 8
    nets, vectors = {}, {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + ln].decode()
        off += ln
        kind = blob[off : off + 1]
        (size,) = struct.unpack_from("<Q", blob, off + 1)
        off += 9
        payload = blob[off : off + size]
        off += size
        if kind == b"M":
            nets[name] = load_mlp(payload)
        else:
            vectors[name] = np.frombuffer(payload, "<f8").astype(np.float64)
    return nets, vectors
