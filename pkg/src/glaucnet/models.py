"""X-Unet segmentation regressor and the dilated-convolution glaucoma classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .blocks import ASPP, ASPPConfig, ConvBlock, SEBlock, SEConfig
from .errors import ConfigInvalid, InputTooSmall, ShapeMismatch
from .layers import (Activation, Conv2d, ConvTranspose2d, Dense, GlobalAvgPool, Layer, LayerGradients, Pool2d,
                     Sequential, concat_channels, split_channels)


@dataclass(frozen=True)
class XUnetConfig:
    """X-Unet topology.

    ``input_levels`` counts the image-pyramid scales fed to the encoder:
    level 0 gets the image itself, and every level ``l`` in
    ``1..input_levels-1`` gets the image downsampled by ``2**l``
    concatenated onto its incoming feature channels.
    """

    depth: int = 3
    base_channels: int = 16
    input_levels: int = 3
    se_reduction: int = 8
    block_depth: int = 1
    in_channels: int = 3

    def validate(self):
        if self.depth < 1 or self.base_channels < 1 or self.block_depth < 1 or self.se_reduction < 1:
            raise ConfigInvalid(f"non-positive X-Unet setting in {self}")
        if not 1 <= self.input_levels <= self.depth:
            raise ConfigInvalid(f"input_levels must lie in [1, depth], got {self.input_levels}")

    def width(self, level: int) -> int:
        return self.base_channels * 2 ** level


class XUnet(Layer):
    kind = "xunet"

    def __init__(self, cfg: XUnetConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.meta: dict = {}
        rng = np.random.default_rng(seed)
        for lvl in range(cfg.depth):
            cin = cfg.in_channels if lvl == 0 else cfg.width(lvl - 1)
            if 0 < lvl < cfg.input_levels:
                cin += cfg.in_channels
            self.add(f"enc{lvl}", self._stage(cin, cfg.width(lvl), rng))
            self.add(f"pool{lvl}", Pool2d("max", 2, 2))
        self.add("bottleneck", self._stage(cfg.width(cfg.depth - 1), cfg.width(cfg.depth), rng))
        for lvl in reversed(range(cfg.depth)):
            self.add(f"up{lvl}", ConvTranspose2d(cfg.width(lvl + 1), cfg.width(lvl), 2, 2, 0, rng))
            self.add(f"dec{lvl}", self._stage(2 * cfg.width(lvl), cfg.width(lvl), rng))
        self.add("head", Sequential(Conv2d(cfg.width(0), 1, 1, rng=rng), Activation("sigmoid")))

    def _stage(self, cin, cout, rng):
        return Sequential(ConvBlock(cin, cout, self.cfg.block_depth, rng=rng),
                          SEBlock(SEConfig(cout, self.cfg.se_reduction), rng))

    def check_input(self, x):
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ShapeMismatch(f"X-Unet expects (N, {cfg.in_channels}, H, W), got {x.shape}")
        step = 2 ** cfg.depth
        if x.shape[2] % step or x.shape[3] % step:
            raise ShapeMismatch(f"X-Unet input {x.shape[2]}x{x.shape[3]} not divisible by {step}")

    def forward(self, x):
        self.check_input(x)
        cfg, ch = self.cfg, self.children
        pyramid = [x]
        for _ in range(1, cfg.input_levels):
            prev = pyramid[-1]
            pyramid.append(ops.resize_bilinear_tensor(prev, prev.shape[2] // 2, prev.shape[3] // 2))
        h, skips, widths = x, [], []
        for lvl in range(cfg.depth):
            if 0 < lvl < cfg.input_levels:
                widths.append(h.shape[1])
                h = concat_channels([h, pyramid[lvl]])
            skip = ch[f"enc{lvl}"].forward(h)
            skips.append(skip)
            h = ch[f"pool{lvl}"].forward(skip)
        h = ch["bottleneck"].forward(h)
        for lvl in reversed(range(cfg.depth)):
            up = ch[f"up{lvl}"].forward(h)
            h = ch[f"dec{lvl}"].forward(concat_channels([up, skips[lvl]]))
        self._cache = ([p.shape for p in pyramid], widths)
        return ch["head"].forward(h)

    def backward(self, grad_output):
        shapes, widths = self._saved()
        cfg, ch = self.cfg, self.children
        grads = LayerGradients(None)

        def run(name, g):
            part = ch[name].backward(g)
            grads.absorb(name, part)
            return part.grad_input

        g = run("head", grad_output)
        skip_grads = [None] * cfg.depth
        for lvl in range(cfg.depth):
            g_cat = run(f"dec{lvl}", g)
            g_up, skip_grads[lvl] = split_channels(g_cat, [cfg.width(lvl), cfg.width(lvl)])
            g = run(f"up{lvl}", g_up)
        g = run("bottleneck", g)
        pyr_grads = [None] * cfg.input_levels
        for lvl in reversed(range(cfg.depth)):
            g = run(f"pool{lvl}", g) + skip_grads[lvl]
            g = run(f"enc{lvl}", g)
            if 0 < lvl < cfg.input_levels:
                g, pyr_grads[lvl] = split_channels(g, [widths[lvl - 1], cfg.in_channels])
        for lvl in reversed(range(1, cfg.input_levels)):
            down = ops.resize_bilinear_tensor_backward(pyr_grads[lvl], *shapes[lvl - 1][2:])
            pyr_grads[lvl - 1] = down if pyr_grads[lvl - 1] is None else pyr_grads[lvl - 1] + down
        grads.grad_input = g if cfg.input_levels == 1 else g + pyr_grads[0]
        return grads


@dataclass(frozen=True)
class ClassifierConfig:
    stem_channels: tuple[int, ...] = (16, 32)
    stem_strides: tuple[int, ...] = (2, 2)
    body_rates: tuple[int, ...] = (1, 2, 4)
    body_depth: int = 1
    aspp_rates: tuple[int, ...] = (1, 2, 4)
    image_pool: bool = True
    head_width: int = 32
    in_channels: int = 3

    def validate(self):
        if not self.stem_channels or len(self.stem_channels) != len(self.stem_strides):
            raise ConfigInvalid("stem_channels and stem_strides must be non-empty and of equal length")
        if min(self.stem_channels) < 1 or min(self.stem_strides) < 1 or self.head_width < 1:
            raise ConfigInvalid(f"non-positive classifier setting in {self}")
        if self.body_rates and min(self.body_rates) < 1:
            raise ConfigInvalid("body rates must be >= 1")
        self.aspp  # validates rates

    @property
    def aspp(self) -> ASPPConfig:
        return ASPPConfig(self.stem_channels[-1], self.head_width, self.aspp_rates, self.image_pool)

    @property
    def downsampling(self) -> int:
        return int(np.prod(self.stem_strides))

    def feature_hw(self, h: int, w: int) -> tuple[int, int]:
        for s in self.stem_strides:
            h, w = (h - 1) // s + 1, (w - 1) // s + 1
        return h, w

    @property
    def min_input_size(self) -> int:
        """Smallest square input whose feature map exceeds the largest dilation."""
        need = max(self.aspp_rates + tuple(self.body_rates)) + 1
        size = 1
        while self.feature_hw(size, size)[0] < need:
            size += 1
        return size


class Classifier(Layer):
    """Strided stem, dilated body, ASPP, global average pool, one logit."""

    kind = "classifier"

    def __init__(self, cfg: ClassifierConfig, seed: int = 0, zero_head: bool = False):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.meta: dict = {}
        rng = np.random.default_rng(seed)
        cin, layers = cfg.in_channels, []
        for cout, stride in zip(cfg.stem_channels, cfg.stem_strides):
            layers += [Conv2d(cin, cout, 3, stride, 1, 1, rng), Activation("relu")]
            cin = cout
        self.add("stem", Sequential(*layers))
        self.add("body", Sequential(*(ConvBlock(cin, cin, cfg.body_depth, rate, rng) for rate in cfg.body_rates)))
        self.add("aspp", ASPP(cfg.aspp, rng))
        self.add("gap", GlobalAvgPool())
        self.add("fc", Dense(cfg.head_width, 1, rng))
        if zero_head:
            for p in self.children["fc"].params.values():
                p[...] = 0.0

    def forward(self, x):
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ShapeMismatch(f"classifier expects (N, {cfg.in_channels}, H, W), got {x.shape}")
        if min(x.shape[2:]) < cfg.min_input_size:
            raise InputTooSmall(f"input {x.shape[2]}x{x.shape[3]} below minimum {cfg.min_input_size}")
        for name in ("stem", "body", "aspp", "gap", "fc"):
            x = self.children[name].forward(x)
        self._cache = True
        return x

    def backward(self, grad_output):
        self._saved()
        grads = LayerGradients(grad_output)
        for name in ("fc", "gap", "aspp", "body", "stem"):
            part = self.children[name].backward(grads.grad_input)
            grads.grad_input = part.grad_input
            grads.absorb(name, part)
        return grads


def build_xunet(cfg: XUnetConfig | None = None, seed: int = 0) -> XUnet:
    return XUnet(cfg or XUnetConfig(), seed)


def xunet_forward(model: XUnet, image: np.ndarray) -> np.ndarray:
    """Regression map in (0, 1) with the spatial shape of ``image``."""
    return model.forward(np.asarray(image, dtype=np.float64))


def build_classifier(cfg: ClassifierConfig | None = None, seed: int = 0, zero_head: bool = False) -> Classifier:
    return Classifier(cfg or ClassifierConfig(), seed, zero_head)


def classifier_predict(model: Classifier, image: np.ndarray) -> np.ndarray:
    """Glaucoma probability per batch item, shape (N,)."""
    return ops.sigmoid(model.forward(np.asarray(image, dtype=np.float64))[:, 0])


def build_model(kind: str, cfg, seed: int = 0):
    if kind == XUnet.kind:
        return XUnet(cfg, seed)
    if kind == Classifier.kind:
        return Classifier(cfg, seed)
    raise ConfigInvalid(f"unknown model kind {kind!r}")
