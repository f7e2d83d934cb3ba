import numpy as np
import pytest

from glaucnet.data import SynthParams, synth_generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_params():
    # 128 px images keep the disc/cup geometry but generate quickly
    return SynthParams(image_size=128, seed=5)


@pytest.fixture(scope="session")
def small_samples(small_params):
    return synth_generate(small_params, 6)


def random_mask(rng, h, w):
    """Label mask with every pixel drawn independently from the three classes."""
    from glaucnet.data.labels import BACKGROUND, CUP, RIM
    values = rng.choice([CUP, RIM, BACKGROUND], size=(h, w))
    return values.astype(np.uint8)


def he_redraw(model, seed: int, gain: float = 1.5):
    """Re-draw weights uniformly within +-gain*sqrt(6/fan_in), biases within +-0.1.

    Used for the tiny end-to-end gradient checks: with the default small
    initialisation many early-layer gradients fall to ~1e-6, where central
    differences at eps=1e-5 are dominated by float64 rounding (~3e-11).
    """
    rng = np.random.default_rng(seed + 100)
    for name, p in model.named_parameters().items():
        if name.endswith("weight"):
            fan_in = p.shape[0] if p.ndim == 2 else int(np.prod(p.shape[1:]))
            p[...] = rng.uniform(-1.0, 1.0, p.shape) * np.sqrt(6.0 / fan_in) * gain
        else:
            p[...] = rng.uniform(-0.1, 0.1, p.shape)
    return model


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
