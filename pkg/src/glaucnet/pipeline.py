"""Preprocessing chains shared by the command line and the acceptance runs.

Segmentation: locate disc -> square crop -> resize -> (augment) -> encode.
Classification: same, with one resized copy per input scale.
"""
from __future__ import annotations

import numpy as np

from .data.labels import encode_label
from .data.transforms import apply_op, image_to_tensor, locate_disc, resize_bilinear, resize_nearest, roi_window


def roi_for(image: np.ndarray, crop: int, blur_window: int = 31) -> tuple[int, int]:
    """Top-left corner of the crop x crop window around the located disc."""
    return roi_window(image.shape, locate_disc(image, blur_window), crop)


def _crop_at(arr, roi, crop):
    x0, y0 = roi
    return arr[y0:y0 + crop, x0:x0 + crop]


def seg_arrays(samples, crop: int, size: int, blur_window: int = 31, ops=("identity",), with_masks=True):
    """Network inputs (N, 3, size, size) and targets (N, 1, size, size).

    Every sample contributes one row per op in ``ops``, in sample-major order.
    Returns ``(inputs, targets or None, rois)`` with one roi per source sample.
    """
    xs, ys, rois = [], [], []
    for s in samples:
        roi = roi_for(s.image, crop, blur_window)
        rois.append(roi)
        img = resize_bilinear(_crop_at(s.image, roi, crop), size, size)
        mask = resize_nearest(_crop_at(s.mask, roi, crop), size, size) if with_masks else None
        for op in ops:
            xs.append(image_to_tensor(apply_op(img, op))[0])
            if with_masks:
                ys.append(encode_label(apply_op(mask, op))[0])
    inputs = np.stack(xs)
    targets = np.stack(ys) if with_masks else None
    return inputs, targets, rois


def cls_arrays(samples, crop: int, sizes, blur_window: int = 31, ops=("identity",)):
    """One (N, 3, s, s) array per scale in ``sizes`` plus the roi of each sample."""
    rois = [roi_for(s.image, crop, blur_window) for s in samples]
    crops = [_crop_at(s.image, roi, crop) for s, roi in zip(samples, rois)]
    groups = []
    for size in sizes:
        rows = [image_to_tensor(apply_op(resize_bilinear(c, size, size), op))[0] for c in crops for op in ops]
        groups.append(np.stack(rows))
    return groups, rois


def expand_labels(labels, ops) -> np.ndarray:
    return np.repeat(np.asarray(labels), len(ops))


__all__ = ["roi_for", "seg_arrays", "cls_arrays", "expand_labels"]
