"""Losses, the Adam optimizer and the mini-batch training loops."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, EmptyDataset, LabelInvalid, ShapeMismatch
from .layers import Layer
from .ops import sigmoid

log = logging.getLogger(__name__)

DEFAULT_LR = 1e-4


def mae_loss(pred: np.ndarray, target: np.ndarray):
    """Mean absolute error and its subgradient w.r.t. ``pred`` (sign(0) = 0)."""
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mae_loss: pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeMismatch("mae_loss on empty tensors")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _check_labels(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise LabelInvalid(f"binary labels must be 0 or 1, got {np.unique(y)}")
    return y


def _bce_from_logits(z, y):
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def bce_loss(p: float, y: int):
    """Binary cross-entropy of probability ``p`` against label ``y``.

    Evaluated through the logit of ``p`` in the overflow-free form.
    Returns ``(loss, d loss / d logit)``.
    """
    y = float(_check_labels(y))
    p = float(p)
    z = np.log(p) - np.log1p(-p)
    return float(_bce_from_logits(z, y)), p - y


def bce_with_logits(logits: np.ndarray, labels: np.ndarray):
    """Per-sample BCE on raw logits; returns (per_sample_losses, grad of the mean)."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = _check_labels(labels).reshape(-1)
    if z.shape != y.shape:
        raise ShapeMismatch(f"{z.size} logits for {y.size} labels")
    p = sigmoid(z)
    return _bce_from_logits(z, y), (p - y) / z.size


@dataclass
class AdamState:
    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** state.t, 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    lr: float = DEFAULT_LR
    shuffle: bool = True

    def validate(self):
        if self.epochs < 1:
            raise ConfigInvalid(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigInvalid(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ConfigInvalid("lr must be non-negative")


def _segmentation_loss(out, target):
    _, grad = mae_loss(out, target)
    return np.abs(out - target).mean(axis=(1, 2, 3)), grad


def _classification_loss(out, labels):
    per_sample, grad = bce_with_logits(out[:, 0], labels)
    return per_sample, grad.reshape(out.shape)


def _fit(model: Layer, groups, targets, loss_fn, cfg: TrainConfig, state: AdamState | None, on_epoch):
    cfg.validate()
    n = len(targets)
    if n == 0:
        raise EmptyDataset("no training samples")
    for g in groups:
        if len(g) != n:
            raise ShapeMismatch(f"{len(g)} inputs for {n} targets")
    state = state if state is not None else AdamState(lr=cfg.lr)
    params = model.named_parameters()
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        losses = np.zeros((len(groups), n))
        for gi, inputs in enumerate(groups):
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                out = model.forward(inputs[idx])
                per_sample, grad = loss_fn(out, targets[idx])
                losses[gi, idx] = per_sample
                adam_step(params, model.backward(grad).grad_params, state)
        history.append(float(losses.mean()))
        log.debug("epoch %d loss %.6f", epoch + 1, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history


def train_segmentation(model, inputs, targets, cfg: TrainConfig, state: AdamState | None = None, on_epoch=None):
    """Fit ``model`` to regression targets with MAE; returns per-epoch mean loss."""
    inputs, targets = np.asarray(inputs, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if targets.size and (targets.min() < 0 or targets.max() > 1):
        raise ShapeMismatch("segmentation targets must lie in [0, 1]")
    return _fit(model, [inputs], targets, _segmentation_loss, cfg, state, on_epoch)


def train_classifier(model, inputs, labels, cfg: TrainConfig, state: AdamState | None = None, on_epoch=None):
    """Fit a logit model with BCE.

    ``inputs`` is one array or a list of arrays holding the same samples at
    different scales; every scale is visited each epoch with one shared set
    of weights.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in (inputs if isinstance(inputs, list) else [inputs])]
    labels = _check_labels(labels).reshape(-1)
    return _fit(model, groups, labels, _classification_loss, cfg, state, on_epoch)
