"""Seeded synthetic fundus photographs with exact disc/cup ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigInvalid
from .labels import BACKGROUND, CUP, RIM
from .sample import Sample

_BACKGROUND_RGB = np.array([0.62, 0.30, 0.12])
_RIM_RGB = np.array([0.78, 0.60, 0.32])
_CUP_RGB = np.array([0.78, 0.74, 0.60])
_DOME_GAIN = 0.25


@dataclass(frozen=True)
class SynthParams:
    image_size: int = 256
    disc_radius: tuple[float, float] = (0.09, 0.13)   # vertical radius / image size
    disc_aspect: tuple[float, float] = (0.85, 1.0)    # horizontal / vertical radius
    cdr_range: tuple[float, float] = (0.2, 0.9)
    center_jitter: float = 0.15                       # max centre offset / image size
    noise: float = 0.02
    cdr_threshold: float = 0.6
    seed: int = 0

    def validate(self):
        lo, hi = self.cdr_range
        if not 0.0 < lo <= hi < 1.0:
            raise ConfigInvalid(f"cdr_range must lie inside (0, 1), got {self.cdr_range}")
        if not 0.0 < self.disc_radius[0] <= self.disc_radius[1]:
            raise ConfigInvalid(f"disc_radius must be positive and ordered, got {self.disc_radius}")
        if not 0.0 < self.disc_aspect[0] <= self.disc_aspect[1] <= 1.0:
            raise ConfigInvalid(f"disc_aspect must lie in (0, 1], got {self.disc_aspect}")
        if self.image_size < 8:
            raise ConfigInvalid("image_size must be >= 8")
        reach = self.center_jitter + self.disc_radius[1]
        if self.center_jitter < 0 or reach >= 0.5:
            raise ConfigInvalid("disc plus centre jitter must stay inside the image")
        if self.noise < 0:
            raise ConfigInvalid("noise must be non-negative")


def _sample_geometry(p: SynthParams, rng: np.random.Generator):
    s = p.image_size
    jitter = int(round(p.center_jitter * s))
    cx = s // 2 + int(rng.integers(-jitter, jitter + 1))
    cy = s // 2 + int(rng.integers(-jitter, jitter + 1))
    rv = rng.uniform(*p.disc_radius) * s
    rh = rv * rng.uniform(*p.disc_aspect)
    cdr = rng.uniform(*p.cdr_range)
    cup_h = min(cdr * rh * rng.uniform(0.9, 1.1), rh)
    return cx, cy, rv, rh, cdr, cdr * rv, cup_h


def _render(p: SynthParams, rng, cx, cy, rv, rh, cv, ch):
    s = p.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    q_disc = np.hypot((xx - cx) / rh, (yy - cy) / rv)
    q_cup = np.hypot((xx - cx) / ch, (yy - cy) / cv)

    mask = np.full((s, s), BACKGROUND, dtype=np.uint8)
    mask[q_disc <= 1.0] = RIM
    mask[q_cup <= 1.0] = CUP

    rho = np.hypot(xx - s / 2, yy - s / 2) / (s / 2)
    shade = 1.0 - 0.35 * np.clip(rho, 0, 1.5) ** 2
    phase = rng.uniform(0, 2 * np.pi, size=2)
    freq = rng.uniform(1.0, 3.0, size=2) * 2 * np.pi / s
    mottle = 0.03 * np.sin(freq[0] * xx + phase[0]) * np.sin(freq[1] * yy + phase[1])
    img = _BACKGROUND_RGB * (shade + mottle)[..., None]

    # ~1 px anti-aliased edges; the whole disc brightens smoothly toward its
    # centre so the brightest blurred point is the disc centre
    disc_alpha = np.clip((1.0 - q_disc) * min(rv, rh) + 0.5, 0.0, 1.0)[..., None]
    cup_alpha = np.clip((1.0 - q_cup) * min(cv, ch) + 0.5, 0.0, 1.0)[..., None]
    dome = (1.0 + _DOME_GAIN * np.clip(1.0 - q_disc ** 2, 0.0, 1.0))[..., None]
    disc_rgb = (_RIM_RGB * (1 - cup_alpha) + _CUP_RGB * cup_alpha) * dome
    img = img * (1 - disc_alpha) + disc_rgb * disc_alpha

    img = img + rng.normal(0.0, p.noise, size=img.shape)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8), mask


def synth_sample(params: SynthParams, index: int) -> Sample:
    """Sample ``index`` of the stream; independent of any other index."""
    rng = np.random.default_rng([params.seed, index])
    cx, cy, rv, rh, cdr, cv, ch = _sample_geometry(params, rng)
    image, mask = _render(params, rng, cx, cy, rv, rh, cv, ch)
    return Sample(
        id=f"synth_{index:05d}",
        image=image,
        mask=mask,
        glaucoma_label=int(cdr > params.cdr_threshold),
        true_cdr=float(cdr),
    )


def synth_geometry(params: SynthParams, index: int) -> dict:
    """Ground-truth disc geometry of sample ``index`` (centre, radii in pixels)."""
    rng = np.random.default_rng([params.seed, index])
    cx, cy, rv, rh, cdr, cv, ch = _sample_geometry(params, rng)
    return {"cx": cx, "cy": cy, "disc_rv": rv, "disc_rh": rh, "cdr": cdr, "cup_rv": cv, "cup_rh": ch}


def synth_generate(params: SynthParams, count: int, start: int = 0) -> list[Sample]:
    params.validate()
    if count < 1:
        raise ConfigInvalid("count must be >= 1")
    return [synth_sample(params, i) for i in range(start, start + count)]
