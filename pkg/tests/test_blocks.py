import numpy as np
import pytest

from glaucnet.blocks import ASPP, ASPPConfig, ConvBlock, SEBlock, SEConfig
from glaucnet.errors import ConfigInvalid, ShapeMismatch
from glaucnet.gradcheck import grad_check


@pytest.mark.parametrize("channels,reduction,expected", [(16, 8, 2), (4, 8, 1), (9, 2, 4), (1, 1, 1)])
def test_se_bottleneck(channels, reduction, expected):
    assert SEConfig(channels, reduction).bottleneck == expected


class TestSE:
    def test_half_gate(self, rng):
        se = SEBlock(SEConfig(4, 2), rng)
        se.fc2.params["weight"][...] = 0.0
        se.fc2.params["bias"][...] = 0.0
        x = rng.normal(size=(2, 4, 3, 3))
        np.testing.assert_array_equal(se.forward(x), x / 2)

    def test_saturated_gate(self, rng):
        se = SEBlock(SEConfig(4, 2), rng)
        se.fc2.params["weight"][...] = 0.0
        se.fc2.params["bias"][...] = 20.0
        x = rng.normal(size=(2, 4, 3, 3))
        np.testing.assert_allclose(se.forward(x), x, atol=1e-8)

    def test_output_is_channel_scaled_input(self, rng):
        se = SEBlock(SEConfig(6, 2), rng)
        x = rng.normal(size=(2, 6, 4, 5))
        ratio = se.forward(x) / x
        assert np.all((ratio > 0) & (ratio < 1))
        np.testing.assert_allclose(ratio, ratio[:, :, :1, :1] * np.ones_like(ratio), rtol=1e-12)

    def test_wrong_channels(self, rng):
        with pytest.raises(ShapeMismatch):
            SEBlock(SEConfig(4), rng).forward(np.zeros((1, 3, 2, 2)))

    def test_grad_check(self, rng):
        assert grad_check(SEBlock(SEConfig(6, 2), rng), rng.normal(size=(2, 6, 4, 3))) < 1e-6


class TestASPP:
    @pytest.mark.parametrize("rates", [(1, 2, 4), (1,), (2, 3)])
    @pytest.mark.parametrize("pool", [True, False])
    def test_preserves_spatial_shape(self, rng, rates, pool):
        block = ASPP(ASPPConfig(4, 3, rates, pool), rng)
        assert block.forward(rng.normal(size=(1, 4, 9, 9))).shape == (1, 3, 9, 9)

    def test_zero_weights_give_fuse_bias(self, rng):
        block = ASPP(ASPPConfig(2, 3), rng)
        for name, p in block.named_parameters().items():
            p[...] = 0.0
        block.children["fuse"].children["0"].params["bias"][...] = [0.5, -1.0, 2.0]
        out = block.forward(rng.normal(size=(1, 2, 5, 5)))
        np.testing.assert_array_equal(out[0, :, 0, 0], [0.5, 0.0, 2.0])
        assert np.all(out == out[:, :, :1, :1])

    @pytest.mark.parametrize("rates", [(), (2, 1), (0, 1), (1, 1)])
    def test_bad_rates(self, rates):
        with pytest.raises(ConfigInvalid):
            ASPPConfig(2, 2, rates)

    @pytest.mark.parametrize("pool", [True, False])
    def test_grad_check(self, pool):
        r = np.random.default_rng(3)
        block = ASPP(ASPPConfig(3, 2, (1, 2), pool), r)
        assert grad_check(block, r.normal(size=(2, 3, 6, 6))) < 1e-6


class TestConvBlock:
    def test_zero_weights(self, rng):
        block = ConvBlock(2, 3, depth=1, rng=rng)
        for p in block.named_parameters().values():
            p[...] = 0.0
        np.testing.assert_array_equal(block.forward(rng.normal(size=(1, 2, 4, 4))), 0.0)

    @pytest.mark.parametrize("depth,dilation,hw", [(1, 1, (5, 7)), (2, 1, (4, 4)), (2, 2, (6, 5)), (3, 3, (8, 8))])
    def test_preserves_spatial_shape(self, rng, depth, dilation, hw):
        block = ConvBlock(2, 3, depth, dilation, rng)
        assert block.forward(rng.normal(size=(1, 2, *hw))).shape == (1, 3, *hw)

    def test_depth_must_be_positive(self):
        with pytest.raises(ConfigInvalid):
            ConvBlock(1, 1, depth=0)

    @pytest.mark.parametrize("dilation", [1, 2])
    def test_grad_check(self, dilation):
        r = np.random.default_rng(10 + dilation)
        assert grad_check(ConvBlock(2, 3, 2, dilation, r), r.normal(size=(2, 2, 6, 5))) < 1e-6
