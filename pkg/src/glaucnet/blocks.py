"""Composite blocks: squeeze-and-excitation gating, ASPP, and conv stages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, ShapeMismatch
from .layers import (Activation, Conv2d, Dense, GlobalAvgPool, Layer, LayerGradients, Sequential,
                     concat_channels, split_channels)


@dataclass(frozen=True)
class SEConfig:
    channels: int
    reduction: int = 8

    @property
    def bottleneck(self) -> int:
        return max(1, self.channels // self.reduction)


@dataclass(frozen=True)
class ASPPConfig:
    in_channels: int
    branch_channels: int
    rates: tuple[int, ...] = (1, 2, 4)
    include_image_pool: bool = True

    def __post_init__(self):
        rates = tuple(int(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates or min(rates) < 1 or any(b <= a for a, b in zip(rates, rates[1:])):
            raise ConfigInvalid(f"ASPP rates must be non-empty, strictly increasing and >= 1: {rates}")


class SEBlock(Layer):
    """Channel gating: features * sigmoid(fc2(relu(fc1(mean_hw(features)))))."""

    def __init__(self, cfg: SEConfig, rng=None):
        super().__init__()
        self.cfg = cfg
        self.pool = self.add("pool", GlobalAvgPool())
        self.fc1 = self.add("fc1", Dense(cfg.channels, cfg.bottleneck, rng))
        self.relu = self.add("relu", Activation("relu"))
        self.fc2 = self.add("fc2", Dense(cfg.bottleneck, cfg.channels, rng))
        self.gate = self.add("gate", Activation("sigmoid"))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.cfg.channels:
            raise ShapeMismatch(f"SE block expects {self.cfg.channels} channels, got shape {x.shape}")
        g = self.gate(self.fc2(self.relu(self.fc1(self.pool(x)))))
        self._cache = (x, g)
        return x * g[:, :, None, None]

    def backward(self, grad_output):
        x, g = self._saved()
        grads = LayerGradients(grad_output * g[:, :, None, None])
        upstream = np.sum(grad_output * x, axis=(2, 3))
        for name in ("gate", "fc2", "relu", "fc1", "pool"):
            part = self.children[name].backward(upstream)
            upstream = part.grad_input
            grads.absorb(name, part)
        grads.grad_input = grads.grad_input + upstream
        return grads


class ConvBlock(Sequential):
    """``depth`` repetitions of 3x3 conv (same padding) followed by relu."""

    def __init__(self, in_channels, out_channels, depth=2, dilation=1, rng=None):
        if depth < 1:
            raise ConfigInvalid("conv block depth must be >= 1")
        layers = []
        for i in range(depth):
            cin = in_channels if i == 0 else out_channels
            layers.append(Conv2d(cin, out_channels, 3, 1, dilation, dilation, rng))
            layers.append(Activation("relu"))
        super().__init__(*layers)


class ASPP(Layer):
    """Parallel 1x1 / dilated 3x3 / image-pool branches fused by a 1x1 conv."""

    def __init__(self, cfg: ASPPConfig, rng=None):
        super().__init__()
        self.cfg = cfg
        cb = cfg.branch_channels
        self.branch_names = ["b1x1"]
        self.add("b1x1", Sequential(Conv2d(cfg.in_channels, cb, 1, rng=rng), Activation("relu")))
        for rate in cfg.rates:
            name = f"rate{rate}"
            self.add(name, Sequential(Conv2d(cfg.in_channels, cb, 3, 1, rate, rate, rng), Activation("relu")))
            self.branch_names.append(name)
        if cfg.include_image_pool:
            self.add("pool", GlobalAvgPool())
            self.add("pool_conv", Sequential(Conv2d(cfg.in_channels, cb, 1, rng=rng), Activation("relu")))
        n_branches = len(self.branch_names) + int(cfg.include_image_pool)
        self.add("fuse", Sequential(Conv2d(n_branches * cb, cb, 1, rng=rng), Activation("relu")))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeMismatch(f"ASPP expects {self.cfg.in_channels} channels, got shape {x.shape}")
        outs = [self.children[name].forward(x) for name in self.branch_names]
        if self.cfg.include_image_pool:
            pooled = self.children["pool"].forward(x)[:, :, None, None]
            img = self.children["pool_conv"].forward(pooled)
            outs.append(np.broadcast_to(img, img.shape[:2] + x.shape[2:]))
        self._cache = [o.shape[1] for o in outs]
        return self.children["fuse"].forward(concat_channels(outs))

    def backward(self, grad_output):
        sizes = self._saved()
        grads = LayerGradients(None)
        fused = self.children["fuse"].backward(grad_output)
        grads.absorb("fuse", fused)
        parts = split_channels(fused.grad_input, sizes)
        gx = None
        for name, g in zip(self.branch_names, parts):
            part = self.children[name].backward(g)
            grads.absorb(name, part)
            gx = part.grad_input if gx is None else gx + part.grad_input
        if self.cfg.include_image_pool:
            part = self.children["pool_conv"].backward(parts[-1].sum(axis=(2, 3), keepdims=True))
            grads.absorb("pool_conv", part)
            gx = gx + self.children["pool"].backward(part.grad_input[:, :, 0, 0]).grad_input
        grads.grad_input = gx
        return grads

