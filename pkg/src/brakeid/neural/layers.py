"""Layer kinds and the sequential :class:`LayerStack`.

Every layer works on float64 batches (batch axis first).  ``forward`` with
``training=True`` caches what ``backward`` needs; inference caches nothing.
Frozen layers keep their parameters fixed but still pass gradients through to
earlier layers.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import NoCachedActivations, ShapeMismatch
from ..rng import make_rng


class Layer:
    kind = "layer"

    def __init__(self):
        self.frozen = False
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def config(self) -> dict:
        return {}

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise NoCachedActivations(f"{self.kind}: backward called without a training-mode forward")
        return self._cache

    def _set_grads(self, **grads):
        for name, g in grads.items():
            self.grads[name] = np.zeros_like(g) if self.frozen else g

    def _zero_grads(self):
        for name, p in self.params.items():
            g = self.grads.get(name)
            if g is None or g.shape != p.shape or g.any():
                self.grads[name] = np.zeros_like(p)

    def clear_cache(self):
        self._cache = None

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.params = {"W": np.zeros((self.n_in, self.n_out)), "b": np.zeros(self.n_out)}

    def config(self):
        return {"in": self.n_in, "out": self.n_out}

    def output_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ShapeMismatch(f"dense expects ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def init_params(self, rng):
        # Glorot uniform
        limit = np.sqrt(6.0 / (self.n_in + self.n_out))
        self.params["W"] = rng.uniform(-limit, limit, size=(self.n_in, self.n_out))
        self.params["b"] = np.zeros(self.n_out)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"dense expects (batch, {self.n_in}), got {x.shape}")
        if training:
            self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        x = self._cached()
        if self.frozen:
            self._zero_grads()
        else:
            self._set_grads(W=x.T @ dy, b=dy.sum(axis=0))
        return dy @ self.params["W"].T


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        if training:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy):
        return dy * self._cached()


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        if training:
            self._cache = y
        return y

    def backward(self, dy):
        y = self._cached()
        return dy * y * (1.0 - y)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False):
        z = x - x.max(axis=1, keepdims=True)
        ez = np.exp(z)
        y = ez / ez.sum(axis=1, keepdims=True)
        if training:
            self._cache = y
        return y

    def backward(self, dy):
        y = self._cached()
        return y * (dy - (dy * y).sum(axis=1, keepdims=True))


class Conv2D(Layer):
    """3x3 convolution, stride 1, zero padding 1, NCHW."""

    kind = "conv2d"

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.in_ch, self.out_ch = int(in_ch), int(out_ch)
        self.params = {"W": np.zeros((self.out_ch, self.in_ch, 3, 3)), "b": np.zeros(self.out_ch)}

    def config(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "k": 3, "stride": 1, "pad": 1}

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_ch:
            raise ShapeMismatch(f"conv2d expects ({self.in_ch}, H, W), got {in_shape}")
        return (self.out_ch,) + tuple(in_shape[1:])

    def init_params(self, rng):
        # He uniform
        limit = np.sqrt(6.0 / (self.in_ch * 9))
        self.params["W"] = rng.uniform(-limit, limit, size=(self.out_ch, self.in_ch, 3, 3))
        self.params["b"] = np.zeros(self.out_ch)

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"conv2d expects (batch, {self.in_ch}, H, W), got {x.shape}")
        if training:
            self._cache = x
        return kernels.conv2d_forward(x, self.params["W"], self.params["b"])

    def backward(self, dy):
        x = self._cached()
        dx, dw, db = kernels.conv2d_backward(x, self.params["W"], dy)
        self._set_grads(W=dw, b=db)
        return dx


class MaxPool2D(Layer):
    """2x2 max pooling with stride 2 (odd trailing rows/cols dropped)."""

    kind = "maxpool2d"

    def config(self):
        return {"size": 2}

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] < 2 or in_shape[2] < 2:
            raise ShapeMismatch(f"maxpool2d expects (C, H>=2, W>=2), got {in_shape}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeMismatch(f"maxpool2d expects a 4-D batch, got {x.shape}")
        out, idx = kernels.maxpool2d_forward(x)
        if training:
            self._cache = (idx, x.shape)
        return out

    def backward(self, dy):
        idx, shape = self._cached()
        return kernels.maxpool2d_backward(dy, idx, shape)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._cached())


LAYER_KINDS = {cls.kind: cls for cls in (Dense, ReLU, Sigmoid, Softmax, Conv2D, MaxPool2D, Flatten)}


def layer_from_config(kind: str, cfg: dict) -> Layer:
    if kind == "dense":
        return Dense(cfg["in"], cfg["out"])
    if kind == "conv2d":
        return Conv2D(cfg["in_ch"], cfg["out_ch"])
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind]()


class LayerStack:
    """Ordered layers with a fixed per-sample input shape."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    @classmethod
    def build(cls, layers, input_shape, seed: int) -> "LayerStack":
        """Construct and initialise weights in layer order from one seeded stream."""
        stack = cls(layers, input_shape)
        rng = make_rng(seed, "init")
        for layer in stack.layers:
            layer.init_params(rng)
        return stack

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"stack expects (batch,) + {self.input_shape}, got {x.shape}")
        if not training:
            for layer in self.layers:
                layer.clear_cache()
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    __call__ = forward

    def backward(self, dy, start=None):
        """Backpropagate ``dy`` from layer ``start`` (default: the last) to the input."""
        stop = len(self.layers) if start is None else start
        for layer in reversed(self.layers[:stop]):
            dy = layer.backward(dy)
        return dy

    def param_slots(self, include_frozen=False):
        """``(layer_index, name)`` pairs of parameters in fixed order."""
        return [(i, name) for i, layer in enumerate(self.layers)
                if include_frozen or not layer.frozen
                for name in layer.params]

    def trainable_params(self):
        return [self.layers[i].params[n] for i, n in self.param_slots()]

    def trainable_grads(self):
        return [self.layers[i].grads[n] for i, n in self.param_slots()]

    def freeze(self, frozen=True):
        for layer in self.layers:
            layer.frozen = frozen
        return self

    def n_params(self):
        return sum(p.size for layer in self.layers for p in layer.params.values())

    def weight_bytes(self) -> bytes:
        """Concatenated raw parameter bytes, for freeze-integrity comparisons."""
        return b"".join(np.ascontiguousarray(layer.params[n]).tobytes()
                        for layer in self.layers for n in sorted(layer.params))

    def __repr__(self):
        inner = ", ".join(repr(layer) for layer in self.layers)
        return f"LayerStack(input_shape={self.input_shape}, layers=[{inner}])"


def mlp(sizes, hidden="relu", head=None):
    """Dense layers for ``sizes`` with ``hidden`` activations and an optional head activation."""
    layers = []
    for k in range(len(sizes) - 1):
        layers.append(Dense(sizes[k], sizes[k + 1]))
        if k < len(sizes) - 2:
            layers.append(LAYER_KINDS[hidden]())
    if head is not None:
        layers.append(LAYER_KINDS[head]())
    return layers
