"""Label masks and their regression-target encoding.

A mask is a (H, W) uint8 array holding the Netpbm gray levels of its class:
CUP = 0, RIM = 128, BACKGROUND = 255. The optic disc is CUP | RIM.
"""
from __future__ import annotations

import numpy as np

from ..errors import ThresholdInvalid

CUP, RIM, BACKGROUND = 0, 128, 255
MASK_VALUES = np.array([CUP, RIM, BACKGROUND], dtype=np.uint8)

TARGET_LEVELS = {CUP: 0.0, RIM: 0.5, BACKGROUND: 1.0}
DEFAULT_T_CUP, DEFAULT_T_DISC = 0.25, 0.75


def cup_region(mask: np.ndarray) -> np.ndarray:
    return mask == CUP


def disc_region(mask: np.ndarray) -> np.ndarray:
    return mask != BACKGROUND


def encode_label(mask: np.ndarray) -> np.ndarray:
    """Regression target of shape (1, 1, H, W): cup 0.0, rim 0.5, background 1.0."""
    target = np.ones(mask.shape, dtype=np.float64)
    target[mask == RIM] = TARGET_LEVELS[RIM]
    target[mask == CUP] = TARGET_LEVELS[CUP]
    return target[None, None]


def decode_prediction(pred: np.ndarray, t_cup: float = DEFAULT_T_CUP, t_disc: float = DEFAULT_T_DISC) -> np.ndarray:
    """Threshold a regression map (any leading singleton axes) back into a mask."""
    if not 0.0 < t_cup < t_disc < 1.0:
        raise ThresholdInvalid(f"need 0 < t_cup < t_disc < 1, got {t_cup}, {t_disc}")
    values = np.asarray(pred, dtype=np.float64)
    while values.ndim > 2:
        values = values[0]
    mask = np.full(values.shape, BACKGROUND, dtype=np.uint8)
    mask[values < t_disc] = RIM
    mask[values < t_cup] = CUP
    return mask
