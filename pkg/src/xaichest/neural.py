"""Small real-valued feed-forward networks: forward, exact backprop, MSE, Adam.

Batches are row-major: ``x`` has shape ``(batch, features)``. A layer's
weight matrix has shape ``(out, in)`` so that ``z = x @ W.T + b``.
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu", "sigmoid")
_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}
MODEL_MAGIC = b"XCFN"
MODEL_VERSION = 1


def complex_to_real(h) -> np.ndarray:
    """Stack real parts over imaginary parts along the last axis."""
    h = np.asarray(h)
    return np.concatenate([h.real, h.imag], axis=-1)


def real_to_complex(v) -> np.ndarray:
    v = np.asarray(v)
    n = v.shape[-1] // 2
    return v[..., :n] + 1j * v[..., n:]


def _activate(z, name):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        # keep log(s) finite even where the tanh saturates
        eps = np.finfo(z.dtype).eps
        return np.clip(s, eps, 1 - eps)
    return z


def _activation_grad(z, a, name):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1 - a)
    return np.ones_like(z)


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in _TAGS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (out, in) and biases (out,)")


class FnnModel:
    """A stack of affine layers, each followed by an elementwise activation."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("model needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ValueError("layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def create(
        cls,
        sizes,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ) -> "FnnModel":
        """Glorot-uniform weights, zero biases.

        ``sizes`` lists every width including input and output, e.g.
        ``[104, 15, 15, 15, 104]``.
        """
        rng = rng or np.random.default_rng()
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, (n_out, n_in)).astype(dtype)
            act = output_activation if i == len(sizes) - 2 else hidden_activation
            layers.append(Layer(w, np.zeros(n_out, dtype=dtype), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def _check(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input has {x.shape[-1]} features, model expects {self.input_dim}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        for layer in self.layers:
            x = _activate(x @ layer.weights.T + layer.biases, layer.activation)
        return x

    __call__ = forward

    def forward_cached(self, x):
        """Forward pass that also returns what ``backward`` needs."""
        a = self._check(np.atleast_2d(x))
        cache = []
        for layer in self.layers:
            z = a @ layer.weights.T + layer.biases
            out = _activate(z, layer.activation)
            cache.append((a, z, out))
            a = out
        return a, cache

    def backward(self, cache, grad_out, input_grad: bool = True):
        """Reverse-mode gradients of a scalar loss.

        ``grad_out`` is dLoss/d(output) with the output's shape. Returns a
        list of ``(dW, db)`` per layer and dLoss/d(input) (None if
        ``input_grad`` is False).
        """
        g = np.asarray(grad_out, dtype=self.dtype)
        grads = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            a_in, z, a_out = cache[idx]
            gz = g * _activation_grad(z, a_out, layer.activation)
            grads[idx] = (gz.T @ a_in, gz.sum(axis=0))
            if idx > 0 or input_grad:
                g = gz @ layer.weights
        return grads, (g if input_grad else None)

    def copy(self) -> "FnnModel":
        return FnnModel([Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])

    def astype(self, dtype) -> "FnnModel":
        return FnnModel(
            [Layer(l.weights.astype(dtype), l.biases.astype(dtype), l.activation) for l in self.layers]
        )

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    # persistence: little-endian, float32 payload
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MODEL_MAGIC)
        buf.write(struct.pack("<II", MODEL_VERSION, len(self.layers)))
        for layer in self.layers:
            rows, cols = layer.weights.shape
            buf.write(struct.pack("<IIB", rows, cols, _TAGS[layer.activation]))
            buf.write(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
            buf.write(np.ascontiguousarray(layer.biases, dtype="<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FnnModel":
        if data[:4] != MODEL_MAGIC:
            raise ValueError("not a model file (bad magic)")
        version, n_layers = struct.unpack_from("<II", data, 4)
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        pos = 12
        layers = []
        for _ in range(n_layers):
            rows, cols, tag = struct.unpack_from("<IIB", data, pos)
            pos += 9
            w = np.frombuffer(data, "<f4", rows * cols, pos).reshape(rows, cols)
            pos += 4 * rows * cols
            b = np.frombuffer(data, "<f4", rows, pos)
            pos += 4 * rows
            layers.append(Layer(w.astype(np.float32), b.astype(np.float32), ACTIVATIONS[tag]))
        if pos != len(data):
            raise ValueError("trailing bytes in model file")
        return cls(layers)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FnnModel":
        return cls.from_bytes(Path(path).read_bytes())


def mse_loss(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    pred, target = np.asarray(pred), np.asarray(target)
    return 2.0 * (pred - target) / pred.size


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model: FnnModel, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in model.params()],
            v=[np.zeros_like(p) for p in model.params()],
            **kw,
        )


def adam_step(model: FnnModel, grads, state: AdamState) -> None:
    """Bias-corrected Adam descent step, in place on ``model`` and ``state``."""
    flat = [g for pair in grads for g in pair]
    if len(flat) != len(state.m):
        raise ValueError("gradient list does not match optimizer state")
    state.t += 1
    c1 = 1 - state.beta1 ** state.t
    c2 = 1 - state.beta2 ** state.t
    for p, g, m, v in zip(model.params(), flat, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    lr: float = 1e-3
    split: float = 0.8
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class TrainResult:
    model: FnnModel
    train_loss: list[float]  # mean batch loss per epoch
    test_loss: float
    train_idx: np.ndarray
    test_idx: np.ndarray


def split_indices(n: int, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled train/test partition of ``range(n)``."""
    perm = np.random.default_rng([seed, 0x5B1]).permutation(n)
    n_train = int(round(split * n))
    if n > 1:
        n_train = min(max(n_train, 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def check_finite(value: float, what: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"{what} became {value} at epoch {epoch}; lower the learning rate or check inputs")


def train_utility(x, y, hidden=(15, 15, 15), cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Fit an MSE regression network mapping conventional estimates to true channels.

    Hidden layers use ReLU and the output is linear. The split in ``cfg``
    selects the training rows; the returned test loss is measured on the rest.
    """
    dtype = np.dtype(cfg.dtype)
    x = np.asarray(x, dtype=dtype)
    y = np.asarray(y, dtype=dtype)
    if x.ndim != 2 or y.ndim != 2 or len(x) != len(y) or len(x) == 0:
        raise ValueError("x and y must be non-empty 2-D arrays with matching rows")
    train_idx, test_idx = split_indices(len(x), cfg.split, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    model = FnnModel.create([x.shape[1], *hidden, y.shape[1]], rng=rng, dtype=dtype)
    opt = AdamState.for_model(model, cfg.lr)
    xt, yt = x[train_idx], y[train_idx]

    history = []
    for epoch in range(cfg.epochs):
        total, count = 0.0, 0
        for idx in minibatches(len(xt), cfg.batch_size, rng):
            out, cache = model.forward_cached(xt[idx])
            loss = mse_loss(out, yt[idx])
            grads, _ = model.backward(cache, mse_grad(out, yt[idx]), input_grad=False)
            adam_step(model, grads, opt)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
        check_finite(history[-1], "training loss", epoch)
        if epoch % 50 == 0:
            logger.debug("epoch %d loss %.3e", epoch, history[-1])

    test_loss = mse_loss(model(x[test_idx]), y[test_idx]) if len(test_idx) else float("nan")
    return TrainResult(model, history, test_loss, train_idx, test_idx)
