"""Central finite-difference check of a layer's analytic backward pass."""
from __future__ import annotations

import numpy as np

from .layers import Layer


def relative_error(analytic, numeric) -> np.ndarray:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))


def numeric_gradient(fn, array: np.ndarray, weights: np.ndarray, epsilon: float) -> np.ndarray:
    """d<fn(), weights>/d array by central differences, perturbing ``array`` in place.

    The two outputs are subtracted before the weighted sum to limit
    cancellation error.
    """
    grad = np.zeros_like(array)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + epsilon
        plus = fn()
        flat[k] = orig - epsilon
        minus = fn()
        flat[k] = orig
        gflat[k] = np.sum((plus - minus) * weights) / (2.0 * epsilon)
    return grad


def grad_check(layer: Layer, x: np.ndarray, epsilon: float = 1e-5, seed: int = 0,
               return_details: bool = False):
    """Largest relative error between analytic and numeric gradients.

    Every coordinate of the input and of every parameter is perturbed. The
    scalar under test is ``<layer(x), r>`` for a fixed random ``r``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = layer.forward(x)
    r = rng.standard_normal(out.shape)
    grads = layer.backward(r)

    def fn():
        return layer.forward(x)

    errors = {"input": relative_error(grads.grad_input, numeric_gradient(fn, x, r, epsilon)).max()}
    for name, p in layer.named_parameters().items():
        num = numeric_gradient(fn, p, r, epsilon)
        errors[name] = relative_error(grads.grad_params[name], num).max() if p.size else 0.0
    worst = float(max(errors.values()))
    return (worst, errors) if return_details else worst
