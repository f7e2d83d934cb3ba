"""ROI localization, cropping, resizing and dihedral augmentation."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..errors import ImageTooSmall, NonSquareRotation, ShapeMismatch
from ..ops import interp_matrix
from .sample import Sample


def locate_disc(image: np.ndarray, blur_window: int = 31) -> tuple[int, int]:
    """Centre (cx, cy) of the brightest box-blurred red-channel window.

    Stands in for a learned disc detector: the optic disc is the brightest
    fundus structure. Blurring clamps at the edges and is done on integer
    sums, so ties are exact and resolve to the smallest row, then column.
    """
    if blur_window < 1 or blur_window % 2 == 0:
        raise ValueError(f"blur_window must be odd and >= 1, got {blur_window}")
    red = np.asarray(image)[..., 0].astype(np.int64)
    r = blur_window // 2
    padded = np.pad(red, r, mode="edge")
    csum = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    csum[1:, 1:] = padded.cumsum(0).cumsum(1)
    k = blur_window
    box = csum[k:, k:] - csum[:-k, k:] - csum[k:, :-k] + csum[:-k, :-k]
    cy, cx = np.unravel_index(int(np.argmax(box)), box.shape)
    return int(cx), int(cy)


def roi_window(shape, center, size: int) -> tuple[int, int]:
    """Top-left (x0, y0) of a size x size window centred on ``center``, shifted inside ``shape``."""
    if size < 1:
        raise ValueError("crop size must be >= 1")
    h, w = shape[:2]
    if size > h or size > w:
        raise ImageTooSmall(f"cannot crop {size}x{size} from a {w}x{h} image")
    cx, cy = center
    x0 = min(max(int(cx) - size // 2, 0), w - size)
    y0 = min(max(int(cy) - size // 2, 0), h - size)
    return x0, y0


def crop_roi(image: np.ndarray, center, size: int, mask: np.ndarray | None = None):
    """Square crop around ``center``; returns the image crop, or (image, mask) when a mask is given."""
    x0, y0 = roi_window(image.shape, center, size)
    crop = image[y0:y0 + size, x0:x0 + size].copy()
    if mask is None:
        return crop
    if mask.shape != image.shape[:2]:
        raise ShapeMismatch(f"mask {mask.shape} does not match image {image.shape[:2]}")
    return crop, mask[y0:y0 + size, x0:x0 + size].copy()


def resize_bilinear(image: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a (H, W[, C]) array.

    uint8 input is rounded back to uint8; float input stays float.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"resize target {out_w}x{out_h}")
    arr = np.asarray(image)
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    ry, rx = interp_matrix(h, out_h), interp_matrix(w, out_w)
    data = arr.astype(np.float64)
    if data.ndim == 3:
        out = (ry @ data.transpose(2, 0, 1) @ rx.T).transpose(1, 2, 0)
    else:
        out = ry @ data @ rx.T
    if arr.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def _nearest_index(src: int, dst: int) -> np.ndarray:
    if dst == 1 or src == 1:
        return np.zeros(dst, dtype=int)
    return np.floor(np.arange(dst) * (src - 1) / (dst - 1) + 0.5).astype(int)


def resize_nearest(mask: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbour resize with the same corner-aligned sampling grid."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"resize target {out_w}x{out_h}")
    h, w = mask.shape[:2]
    return mask[_nearest_index(h, out_h)][:, _nearest_index(w, out_w)].copy()


# rot90 is a clockwise quarter turn. transpose / anti_transpose complete the
# dihedral group so that expansion yields 8 variants per sample.
AUGMENTATIONS = ("identity", "rot90", "rot180", "rot270", "flip_h", "flip_v", "transpose", "anti_transpose")


def apply_op(arr: np.ndarray, op: str) -> np.ndarray:
    if op == "identity":
        out = arr
    elif op == "rot90":
        out = np.rot90(arr, k=-1, axes=(0, 1))
    elif op == "rot180":
        out = np.rot90(arr, k=2, axes=(0, 1))
    elif op == "rot270":
        out = np.rot90(arr, k=1, axes=(0, 1))
    elif op == "flip_h":
        out = arr[:, ::-1]
    elif op == "flip_v":
        out = arr[::-1]
    elif op == "transpose":
        out = np.swapaxes(arr, 0, 1)
    elif op == "anti_transpose":
        out = np.swapaxes(arr[::-1, ::-1], 0, 1)
    else:
        raise ValueError(f"unknown augmentation {op!r}")
    return np.ascontiguousarray(out)


def augment(sample: Sample, op: str) -> Sample:
    """Apply one dihedral transform to the image and mask alike; labels are unchanged."""
    h, w = sample.image.shape[:2]
    if op in ("rot90", "rot270", "transpose", "anti_transpose") and h != w:
        raise NonSquareRotation(f"{op} needs a square image, got {w}x{h}")
    mask = None if sample.mask is None else apply_op(sample.mask, op)
    suffix = "" if op == "identity" else f"_{op}"
    return replace(sample, image=apply_op(sample.image, op), mask=mask, id=sample.id + suffix)


def expand_dataset(samples, ops=AUGMENTATIONS) -> list[Sample]:
    return [augment(s, op) for s in samples for op in ops]


def image_to_tensor(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (1, 3, H, W) float64 in [0, 1]."""
    return (np.asarray(image, dtype=np.float64) / 255.0).transpose(2, 0, 1)[None]
