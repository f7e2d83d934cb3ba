"""Binary checkpoint files.

Layout (all integers little-endian)::

    b"RFGC" | version u32 | tensor count u32
    per tensor: name length u32 | UTF-8 name | rank u32 | dims u64 * rank
                | float64 payload

Parameter tensors use their dotted model names. ``meta/`` entries rebuild
the architecture, ``opt/`` entries hold the Adam state.
"""
from __future__ import annotations

import dataclasses
import math
import struct
from pathlib import Path

import numpy as np

from .errors import FormatCorrupt, IoFailure
from .models import Classifier, ClassifierConfig, XUnet, XUnetConfig
from .training import AdamState

MAGIC = b"RFGC"
VERSION = 1
_KINDS = {XUnet.kind: (0, XUnet, XUnetConfig), Classifier.kind: (1, Classifier, ClassifierConfig)}


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise FormatCorrupt(f"checkpoint truncated at byte {self.pos} (need {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_tensors(data: bytes) -> dict[str, np.ndarray]:
    rd = _Reader(data)
    if rd.take(4) != MAGIC:
        raise FormatCorrupt("bad magic bytes, not a checkpoint")
    version, count = rd.unpack("<II")
    if version != VERSION:
        raise FormatCorrupt(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<I")
        try:
            name = rd.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatCorrupt(f"tensor name is not UTF-8: {exc}") from None
        (rank,) = rd.unpack("<I")
        shape = rd.unpack(f"<{rank}Q")
        size = math.prod(shape)
        tensors[name] = np.frombuffer(rd.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if rd.pos != len(data):
        raise FormatCorrupt(f"{len(data) - rd.pos} trailing bytes after last tensor")
    return tensors


def _config_to_meta(cfg) -> dict[str, np.ndarray]:
    return {f"meta/cfg/{f.name}": np.atleast_1d(np.asarray(getattr(cfg, f.name), dtype=np.float64))
            for f in dataclasses.fields(cfg)}


def _config_from_meta(cls, tensors):
    values = {}
    for f in dataclasses.fields(cls):
        key = f"meta/cfg/{f.name}"
        if key not in tensors:
            raise FormatCorrupt(f"missing {key}")
        arr, default = tensors[key], f.default
        if isinstance(default, tuple):
            values[f.name] = tuple(int(v) for v in arr)
        elif isinstance(default, bool):
            values[f.name] = bool(arr[0])
        else:
            values[f.name] = int(arr[0])
    return cls(**values)


def model_tensors(model, state: AdamState | None = None) -> dict[str, np.ndarray]:
    code = _KINDS[model.kind][0]
    out = {"meta/kind": np.array([code], dtype=np.float64)}
    out.update(_config_to_meta(model.cfg))
    for key, value in getattr(model, "meta", {}).items():
        out[f"meta/extra/{key}"] = np.atleast_1d(np.asarray(value, dtype=np.float64))
    out.update(model.named_parameters())
    if state is not None:
        out["opt/t"] = np.array([state.t], dtype=np.float64)
        out["opt/hyper"] = np.array([state.lr, state.beta1, state.beta2, state.eps])
        for name in state.m:
            out[f"opt/m/{name}"] = state.m[name]
            out[f"opt/v/{name}"] = state.v[name]
    return out


def save_checkpoint(model, state: AdamState | None, path) -> None:
    data = encode_tensors(model_tensors(model, state))
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc.strerror or exc}") from None


def load_checkpoint(path):
    """Rebuild ``(model, adam_state_or_None)`` from a checkpoint file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc.strerror or exc}") from None
    tensors = decode_tensors(data)
    if "meta/kind" not in tensors:
        raise FormatCorrupt("checkpoint lacks meta/kind")
    code = int(tensors["meta/kind"][0])
    matches = [(cls, cfg_cls) for c, cls, cfg_cls in _KINDS.values() if c == code]
    if not matches:
        raise FormatCorrupt(f"unknown model kind code {code}")
    cls, cfg_cls = matches[0]
    try:
        model = cls(_config_from_meta(cfg_cls, tensors))
    except FormatCorrupt:
        raise
    except Exception as exc:
        raise FormatCorrupt(f"checkpoint holds an invalid architecture: {exc}") from None
    model.meta = {k[len("meta/extra/"):]: v.tolist() for k, v in tensors.items() if k.startswith("meta/extra/")}
    for name, p in model.named_parameters().items():
        if name not in tensors:
            raise FormatCorrupt(f"checkpoint is missing parameter {name}")
        if tensors[name].shape != p.shape:
            raise FormatCorrupt(f"parameter {name} has shape {tensors[name].shape}, model expects {p.shape}")
        p[...] = tensors[name]
    state = None
    if "opt/t" in tensors:
        if tensors.get("opt/hyper", np.zeros(0)).shape != (4,):
            raise FormatCorrupt("opt/hyper must hold lr, beta1, beta2, eps")
        lr, b1, b2, eps = tensors["opt/hyper"]
        state = AdamState(lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps), t=int(tensors["opt/t"][0]))
        for key, arr in tensors.items():
            if key.startswith("opt/m/"):
                name = key[len("opt/m/"):]
                state.m[name] = arr.copy()
                if f"opt/v/{name}" not in tensors:
                    raise FormatCorrupt(f"optimizer state for {name} lacks its second moment")
                state.v[name] = tensors[f"opt/v/{name}"].copy()
    return model, state
