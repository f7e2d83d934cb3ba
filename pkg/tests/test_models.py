import numpy as np
import pytest

from glaucnet.errors import ConfigInvalid, InputTooSmall, ShapeMismatch, StateMissing
from glaucnet.models import (ClassifierConfig, XUnetConfig, build_classifier, build_model, build_xunet,
                             classifier_predict, xunet_forward)

TINY_XUNET = XUnetConfig(depth=2, base_channels=2, input_levels=2, se_reduction=2)
TINY_CLS = ClassifierConfig(stem_channels=(3, 4), head_width=4, body_rates=(1, 2), aspp_rates=(1, 2))


@pytest.fixture(scope="module")
def xunet():
    return build_xunet(seed=0)


class TestXUnet:
    def test_default_shape_and_range(self, xunet):
        x = np.random.default_rng(0).uniform(size=(1, 3, 64, 64))
        out = xunet_forward(xunet, x)
        assert out.shape == (1, 1, 64, 64)
        assert np.all((out > 0) & (out < 1))

    def test_same_seed_same_parameters(self):
        a, b = build_xunet(TINY_XUNET, seed=4), build_xunet(TINY_XUNET, seed=4)
        pa, pb = a.named_parameters(), b.named_parameters()
        assert pa.keys() == pb.keys()
        assert all(pa[k].tobytes() == pb[k].tobytes() for k in pa)
        c = build_xunet(TINY_XUNET, seed=5)
        assert any(pa[k].tobytes() != v.tobytes() for k, v in c.named_parameters().items())

    def test_batch_items_independent(self, xunet):
        img = np.random.default_rng(1).uniform(size=(1, 3, 32, 32))
        out = xunet_forward(xunet, np.concatenate([img, img]))
        assert out[0].tobytes() == out[1].tobytes()

    @pytest.mark.parametrize("depth,levels,hw", [(1, 1, (8, 6)), (2, 1, (8, 12)), (2, 2, (16, 8)), (3, 3, (16, 24))])
    def test_output_matches_input_dims(self, depth, levels, hw):
        model = build_xunet(XUnetConfig(depth=depth, base_channels=2, input_levels=levels, se_reduction=2))
        x = np.random.default_rng(depth).uniform(size=(2, 3, *hw))
        assert xunet_forward(model, x).shape == (2, 1, *hw)

    def test_indivisible_input(self, xunet):
        with pytest.raises(ShapeMismatch):
            xunet_forward(xunet, np.zeros((1, 3, 60, 64)))

    def test_wrong_channel_count(self, xunet):
        with pytest.raises(ShapeMismatch):
            xunet_forward(xunet, np.zeros((1, 1, 64, 64)))

    @pytest.mark.parametrize("kwargs", [dict(input_levels=4), dict(input_levels=0), dict(depth=0, input_levels=0),
                                        dict(base_channels=0), dict(block_depth=0)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigInvalid):
            build_xunet(XUnetConfig(**kwargs))

    def test_pyramid_channels(self):
        model = build_xunet(XUnetConfig(depth=3, base_channels=4, input_levels=3, se_reduction=2))
        w = model.named_parameters()
        assert w["enc0.0.0.weight"].shape[1] == 3
        assert w["enc1.0.0.weight"].shape[1] == 4 + 3
        assert w["enc2.0.0.weight"].shape[1] == 8 + 3

    def test_backward_before_forward(self):
        with pytest.raises(StateMissing):
            build_xunet(TINY_XUNET).backward(np.zeros((1, 1, 16, 16)))


class TestClassifier:
    def test_default_logit_shape(self):
        model = build_classifier(seed=0)
        assert model.forward(np.random.default_rng(0).uniform(size=(1, 3, 64, 64))).shape == (1, 1)

    @pytest.mark.parametrize("size", [48, 64, 80, 57])
    def test_variable_input_sizes(self, size):
        model = build_classifier(TINY_CLS, seed=1)
        p = classifier_predict(model, np.random.default_rng(size).uniform(size=(2, 3, size, size)))
        assert p.shape == (2,)
        assert np.all((p > 0) & (p < 1))

    def test_zero_head_gives_half(self):
        model = build_classifier(seed=2, zero_head=True)
        x = np.random.default_rng(2).uniform(size=(3, 3, 48, 48))
        np.testing.assert_array_equal(classifier_predict(model, x), 0.5)

    def test_min_input_size(self):
        cfg = ClassifierConfig()
        assert cfg.downsampling == 4
        assert cfg.feature_hw(cfg.min_input_size, cfg.min_input_size)[0] >= 5
        assert cfg.feature_hw(cfg.min_input_size - 1, cfg.min_input_size - 1)[0] < 5
        model = build_classifier(cfg)
        model.forward(np.zeros((1, 3, cfg.min_input_size, cfg.min_input_size)))
        with pytest.raises(InputTooSmall):
            model.forward(np.zeros((1, 3, cfg.min_input_size - 1, cfg.min_input_size - 1)))

    def test_same_seed_same_parameters(self):
        a, b = build_classifier(TINY_CLS, 3), build_classifier(TINY_CLS, 3)
        assert all(v.tobytes() == b.named_parameters()[k].tobytes() for k, v in a.named_parameters().items())

    @pytest.mark.parametrize("kwargs", [dict(stem_channels=()), dict(stem_channels=(4,), stem_strides=(2, 2)),
                                        dict(aspp_rates=(2, 1)), dict(body_rates=(0,)), dict(head_width=0)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigInvalid):
            build_classifier(ClassifierConfig(**kwargs))


def test_build_model_dispatch():
    assert build_model("xunet", TINY_XUNET).kind == "xunet"
    assert build_model("classifier", TINY_CLS).kind == "classifier"
    with pytest.raises(ConfigInvalid):
        build_model("resnet", TINY_CLS)
