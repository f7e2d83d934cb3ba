import numpy as np
import pytest

from glaucnet.errors import StateMissing
from glaucnet.gradcheck import grad_check, numeric_gradient, relative_error
from glaucnet.layers import (Activation, Conv2d, ConvTranspose2d, Dense, GlobalAvgPool, Pool2d, Sequential,
                             concat_channels, glorot_uniform, split_channels)


def test_glorot_bound(rng):
    w = glorot_uniform(rng, (5000,), 10, 14)
    a = np.sqrt(6 / 24)
    assert np.abs(w).max() <= a
    assert np.abs(w).max() > 0.95 * a


def test_seeded_init_is_reproducible():
    a = Conv2d(3, 4, 3, rng=np.random.default_rng(9))
    b = Conv2d(3, 4, 3, rng=np.random.default_rng(9))
    for name in a.params:
        assert a.params[name].tobytes() == b.params[name].tobytes()


def test_backward_before_forward():
    with pytest.raises(StateMissing):
        Dense(2, 3, np.random.default_rng(0)).backward(np.zeros((1, 3)))


def test_named_parameters_are_dotted():
    r = np.random.default_rng(0)
    seq = Sequential(Conv2d(1, 2, 3, rng=r), Activation(), Sequential(Dense(2, 2, r)))
    assert sorted(seq.named_parameters()) == ["0.bias", "0.weight", "2.0.bias", "2.0.weight"]
    assert seq.num_parameters() == 2 * 9 + 2 + 4 + 2


def test_gradient_keys_match_parameters(rng):
    seq = Sequential(Conv2d(2, 3, 3, padding=1, rng=rng), Activation(), Conv2d(3, 1, 1, rng=rng))
    out = seq.forward(rng.normal(size=(1, 2, 5, 5)))
    grads = seq.backward(np.ones_like(out))
    params = seq.named_parameters()
    assert grads.grad_params.keys() == params.keys()
    for k in params:
        assert grads.grad_params[k].shape == params[k].shape


def test_linear_layer_gradient_ignores_input_shift(rng):
    layer = Conv2d(2, 2, 3, rng=rng)
    x, g = rng.normal(size=(1, 2, 6, 6)), rng.normal(size=(1, 2, 4, 4))
    layer.forward(x)
    g1 = layer.backward(g).grad_input
    layer.forward(x + 3.0)
    np.testing.assert_array_equal(layer.backward(g).grad_input, g1)


def test_concat_split_roundtrip(rng):
    parts = [rng.normal(size=(2, c, 3, 3)) for c in (1, 4, 2)]
    back = split_channels(concat_channels(parts), [1, 4, 2])
    for a, b in zip(parts, back):
        np.testing.assert_array_equal(a, b)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(1.0, -1.0) == 1.0


def test_numeric_gradient_of_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    g = numeric_gradient(lambda: x ** 2, x, np.ones(3), 1e-5)
    np.testing.assert_allclose(g, 2 * x, rtol=1e-9)
    np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])  # perturbation undone


PRIMITIVES = {
    "conv": lambda r: (Conv2d(3, 4, 3, 1, 1, 1, r), (2, 3, 6, 5)),
    "conv_stride2": lambda r: (Conv2d(2, 3, 3, 2, 1, 1, r), (2, 2, 7, 6)),
    "conv_dilation2": lambda r: (Conv2d(2, 3, 3, 1, 0, 2, r), (1, 2, 9, 8)),
    "conv_dilation3_padded": lambda r: (Conv2d(2, 2, 3, 1, 3, 3, r), (1, 2, 7, 7)),
    "conv_1x1": lambda r: (Conv2d(4, 2, 1, rng=r), (2, 4, 3, 3)),
    "conv_transpose": lambda r: (ConvTranspose2d(3, 2, 2, 2, 0, r), (2, 3, 3, 4)),
    "conv_transpose_k3": lambda r: (ConvTranspose2d(2, 2, 3, 2, 1, r), (1, 2, 3, 3)),
    "max_pool": lambda r: (Pool2d("max", 2), (2, 3, 6, 4)),
    "max_pool_overlap": lambda r: (Pool2d("max", 3, 2), (1, 2, 7, 7)),
    "avg_pool": lambda r: (Pool2d("avg", 2), (2, 3, 6, 4)),
    "global_avg_pool": lambda r: (GlobalAvgPool(), (2, 3, 4, 5)),
    "dense": lambda r: (Dense(3, 4, r), (4, 3)),
    "sigmoid": lambda r: (Activation("sigmoid"), (3, 7)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_grad_check(name):
    r = np.random.default_rng(sum(map(ord, name)))
    layer, shape = PRIMITIVES[name](r)
    x = r.normal(size=shape)
    assert grad_check(layer, x) < 1e-6


def test_relu_grad_check_away_from_kink(rng):
    x = rng.normal(size=(4, 6))
    x[np.abs(x) < 1e-3] = 0.5   # keep every input > 10 * epsilon from the kink
    assert grad_check(Activation("relu"), x) < 1e-6


def test_max_pool_grad_check_without_near_ties(rng):
    # distinct values at least 1e-3 apart keep argmax stable under perturbation
    x = rng.permutation(64).reshape(1, 1, 8, 8) * 1e-2
    assert grad_check(Pool2d("max", 2), x) < 1e-6
