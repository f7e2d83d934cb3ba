"""Stateful layers wrapping the primitives in :mod:`glaucnet.ops`.

A layer owns its parameter arrays, remembers what ``forward`` needs for the
gradient, and returns a :class:`LayerGradients` from ``backward``. Composite
layers register children under a name; parameter and gradient keys are the
dotted path (``enc0.conv.0.weight``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ShapeMismatch, StateMissing
from .ops import ConvSpec


@dataclass
class LayerGradients:
    grad_input: np.ndarray
    grad_params: dict[str, np.ndarray] = field(default_factory=dict)

    def absorb(self, prefix: str, other: "LayerGradients"):
        for name, g in other.grad_params.items():
            self.grad_params[f"{prefix}.{name}"] = g


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_weight_and_bias(rng, weight_shape, bias_len, fan_in, fan_out):
    # Biases share the weight bound; exact-zero biases would park dead-relu
    # pre-activations on the kink.
    rng = np.random.default_rng() if rng is None else rng
    weight = glorot_uniform(rng, weight_shape, fan_in, fan_out)
    return weight, glorot_uniform(rng, (bias_len,), fan_in, fan_out)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.children: dict[str, Layer] = {}
        self._cache = None

    def add(self, name: str, layer: "Layer") -> "Layer":
        self.children[name] = layer
        return layer

    def named_parameters(self) -> dict[str, np.ndarray]:
        out = dict(self.params)
        for cname, child in self.children.items():
            for pname, p in child.named_parameters().items():
                out[f"{cname}.{pname}"] = p
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def _saved(self):
        if self._cache is None:
            raise StateMissing(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_output) -> LayerGradients:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=0, dilation=1, rng=None):
        super().__init__()
        self.spec = ConvSpec(in_channels, out_channels, kernel_size, stride, padding, dilation)
        kh, kw = self.spec.kernel_size
        self.params["weight"], self.params["bias"] = init_weight_and_bias(
            rng, (out_channels, in_channels, kh, kw), out_channels, in_channels * kh * kw, out_channels * kh * kw
        )

    def forward(self, x):
        out, cols = ops.conv2d_with_cols(x, self.params["weight"], self.params["bias"], self.spec)
        self._cache = (x.shape, cols)
        return out

    def backward(self, grad_output):
        x_shape, cols = self._saved()
        gx, gw, gb = ops.conv2d_backward(grad_output, x_shape, cols, self.params["weight"], self.spec)
        return LayerGradients(gx, {"weight": gw, "bias": gb})


class ConvTranspose2d(Layer):
    def __init__(self, in_channels, out_channels, kernel_size=2, stride=2, padding=0, rng=None):
        super().__init__()
        kh, kw = ops._pair(kernel_size)
        self.stride, self.padding = stride, padding
        self.params["weight"], self.params["bias"] = init_weight_and_bias(
            rng, (in_channels, out_channels, kh, kw), out_channels, in_channels * kh * kw, out_channels * kh * kw
        )

    def forward(self, x):
        self._cache = x
        return ops.conv2d_transpose(x, self.params["weight"], self.params["bias"], self.stride, self.padding)

    def backward(self, grad_output):
        x = self._saved()
        gx, gw, gb = ops.conv2d_transpose_backward(grad_output, x, self.params["weight"], self.stride, self.padding)
        return LayerGradients(gx, {"weight": gw, "bias": gb})


class Pool2d(Layer):
    def __init__(self, kind="max", window=2, stride=None):
        super().__init__()
        self.kind, self.window, self.stride = kind, window, stride

    def forward(self, x):
        out, argmax = ops.pool2d(x, self.kind, self.window, self.stride)
        self._cache = (x.shape, argmax)
        return out

    def backward(self, grad_output):
        x_shape, argmax = self._saved()
        return LayerGradients(
            ops.pool2d_backward(grad_output, x_shape, self.kind, argmax, self.window, self.stride)
        )


class GlobalAvgPool(Layer):
    def forward(self, x):
        self._cache = x.shape
        return ops.global_avg_pool(x)

    def backward(self, grad_output):
        return LayerGradients(ops.global_avg_pool_backward(grad_output, self._saved()))


class Dense(Layer):
    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        self.params["weight"], self.params["bias"] = init_weight_and_bias(
            rng, (in_features, out_features), out_features, in_features, out_features
        )

    def forward(self, x):
        self._cache = x
        return ops.dense(x, self.params["weight"], self.params["bias"])

    def backward(self, grad_output):
        gx, gw, gb = ops.dense_backward(grad_output, self._saved(), self.params["weight"])
        return LayerGradients(gx, {"weight": gw, "bias": gb})


class Activation(Layer):
    def __init__(self, kind="relu"):
        super().__init__()
        if kind not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind

    def forward(self, x):
        out = ops.activate(x, self.kind)
        self._cache = (x, out)
        return out

    def backward(self, grad_output):
        x, out = self._saved()
        return LayerGradients(ops.activate_backward(grad_output, x, out, self.kind))


class Sequential(Layer):
    """Chain of layers named "0", "1", ..."""

    def __init__(self, *layers: Layer):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add(str(i), layer)

    def forward(self, x):
        for layer in self.children.values():
            x = layer.forward(x)
        self._cache = True
        return x

    def backward(self, grad_output):
        self._saved()
        grads = LayerGradients(grad_output)
        for name in reversed(list(self.children)):
            g = self.children[name].backward(grads.grad_input)
            grads.grad_input = g.grad_input
            grads.absorb(name, g)
        return grads


def concat_channels(parts):
    heights = {p.shape[2:] for p in parts}
    if len(heights) != 1:
        raise ShapeMismatch(f"cannot concatenate feature maps with spatial shapes {sorted(heights)}")
    return np.concatenate(parts, axis=1)


def split_channels(grad, sizes):
    return np.split(grad, np.cumsum(sizes)[:-1], axis=1)
