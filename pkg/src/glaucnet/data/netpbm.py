"""Binary PPM (P6) images and PGM (P5) label masks."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import FormatCorrupt, IoFailure
from .labels import MASK_VALUES


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_bytes(path, data: bytes):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _parse(data: bytes, magic: bytes, channels: int, path) -> np.ndarray:
    if data[:2] != magic:
        raise FormatCorrupt(f"{path}: expected {magic.decode()} header")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatCorrupt(f"{path}: malformed header")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatCorrupt(f"{path}: header must end with one whitespace byte")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatCorrupt(f"{path}: non-positive size {width}x{height}")
    if maxval != 255:
        raise FormatCorrupt(f"{path}: only maxval 255 is supported, got {maxval}")
    expected = width * height * channels
    payload = data[pos:]
    if len(payload) != expected:
        raise FormatCorrupt(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    shape = (height, width, channels) if channels > 1 else (height, width)
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape).copy()


def read_ppm(path) -> np.ndarray:
    """Load an RGB image as a (H, W, 3) uint8 array."""
    return _parse(_read_bytes(path), b"P6", 3, path)


def write_ppm(image: np.ndarray, path) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise FormatCorrupt(f"PPM needs a (H, W, 3) uint8 array, got {image.dtype} {image.shape}")
    h, w = image.shape[:2]
    _write_bytes(path, f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes())


def read_pgm(path) -> np.ndarray:
    """Load a label mask; every pixel must be 0 (cup), 128 (rim) or 255 (background)."""
    mask = _parse(_read_bytes(path), b"P5", 1, path)
    bad = ~np.isin(mask, MASK_VALUES)
    if bad.any():
        raise FormatCorrupt(f"{path}: invalid label value {int(mask[bad][0])}")
    return mask


def write_pgm(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != np.uint8:
        raise FormatCorrupt(f"PGM needs a (H, W) uint8 array, got {mask.dtype} {mask.shape}")
    if not np.isin(mask, MASK_VALUES).all():
        raise FormatCorrupt("mask holds values outside {0, 128, 255}")
    h, w = mask.shape
    _write_bytes(path, f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(mask).tobytes())
