"""Differentiable tensor primitives on float64 NCHW arrays.

Each primitive comes as a forward function plus a ``*_backward`` function
that maps the upstream gradient to gradients of the inputs. Convolutions
are lowered to a single GEMM through an im2col matrix; the scatter back
(col2im) loops over kernel taps only, so summation order is fixed and
results are reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import DegenerateOutput, ShapeMismatch

DTYPE = np.float64


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ShapeMismatch(f"expected a pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution."""

    in_channels: int
    out_channels: int
    kernel_size: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)

    def __post_init__(self):
        for name in ("kernel_size", "stride", "padding", "dilation"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeMismatch("channel counts must be positive")
        if min(self.kernel_size + self.stride + self.dilation) < 1 or min(self.padding) < 0:
            raise ShapeMismatch(f"invalid convolution geometry {self}")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        (kh, kw), (sh, sw) = self.kernel_size, self.stride
        (ph, pw), (dh, dw) = self.padding, self.dilation
        ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        if ho < 1 or wo < 1:
            raise DegenerateOutput(f"convolution output would be {ho}x{wo} for input {h}x{w}")
        return ho, wo


def _check_rank(x: np.ndarray, rank: int, what: str):
    if x.ndim != rank:
        raise ShapeMismatch(f"{what}: expected rank {rank}, got shape {x.shape}")


def _windows(xp, kernel, stride, dilation, out_hw):
    """Read-only view (N, C, Ho, Wo, kh, kw) of sliding windows over ``xp``."""
    n, c = xp.shape[:2]
    s = xp.strides
    return as_strided(
        xp,
        shape=(n, c, out_hw[0], out_hw[1], kernel[0], kernel[1]),
        strides=(s[0], s[1], s[2] * stride[0], s[3] * stride[1], s[2] * dilation[0], s[3] * dilation[1]),
        writeable=False,
    )


def _im2col(xp, kernel, stride, dilation, out_hw) -> np.ndarray:
    """Rows indexed by (c, i, j), columns by (n, ho, wo).

    Channel-major so the copy and the later scatter run over contiguous rows.
    """
    win = _windows(xp, kernel, stride, dilation, out_hw)
    n, c = xp.shape[:2]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kernel[0] * kernel[1], n * out_hw[0] * out_hw[1])


def _col2im(cols, padded_shape, kernel, stride, dilation, out_hw) -> np.ndarray:
    """Adjoint of :func:`_im2col`."""
    n, c = padded_shape[:2]
    ho, wo = out_hw
    cols = cols.reshape(c, kernel[0], kernel[1], n, ho, wo)
    out = np.zeros(padded_shape, dtype=DTYPE)
    for i in range(kernel[0]):
        r0 = i * dilation[0]
        for j in range(kernel[1]):
            c0 = j * dilation[1]
            out[:, :, r0:r0 + stride[0] * (ho - 1) + 1:stride[0], c0:c0 + stride[1] * (wo - 1) + 1:stride[1]] += (
                cols[:, i, j].transpose(1, 0, 2, 3)
            )
    return out


def _pad(x, padding):
    ph, pw = padding
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _check_conv(x, weights, bias, spec: ConvSpec):
    _check_rank(x, 4, "conv2d input")
    expected = (spec.out_channels, spec.in_channels) + spec.kernel_size
    if weights.shape != expected:
        raise ShapeMismatch(f"conv2d weights {weights.shape}, expected {expected}")
    if x.shape[1] != spec.in_channels:
        raise ShapeMismatch(f"conv2d input has {x.shape[1]} channels, expected {spec.in_channels}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeMismatch(f"conv2d bias {bias.shape}, expected ({spec.out_channels},)")


def conv2d_with_cols(x, weights, bias, spec: ConvSpec):
    """Forward convolution that also returns the im2col matrix for reuse in backward."""
    _check_conv(x, weights, bias, spec)
    n = x.shape[0]
    ho, wo = spec.output_hw(x.shape[2], x.shape[3])
    cols = _im2col(_pad(x, spec.padding), spec.kernel_size, spec.stride, spec.dilation, (ho, wo))
    out = weights.reshape(spec.out_channels, -1) @ cols
    out = out.reshape(spec.out_channels, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out), cols


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation with zero padding, stride and dilation.

    Args:
        x: input of shape (N, Cin, H, W).
        weights: kernel of shape (Cout, Cin, kh, kw).
        bias: per output channel, or None.
        spec: convolution geometry.

    Returns:
        Array of shape (N, Cout, H', W').
    """
    return conv2d_with_cols(x, weights, bias, spec)[0]


def conv2d_backward(grad, x_shape, cols, weights, spec: ConvSpec):
    """Gradients of a convolution w.r.t. (input, weights, bias)."""
    n, _, h, w = x_shape
    ho, wo = grad.shape[2:]
    g2 = grad.transpose(1, 0, 2, 3).reshape(spec.out_channels, -1)
    gw = (g2 @ cols.T).reshape(weights.shape)
    gb = grad.sum(axis=(0, 2, 3))
    gcols = weights.reshape(spec.out_channels, -1).T @ g2
    ph, pw = spec.padding
    gxp = _col2im(gcols, (n, spec.in_channels, h + 2 * ph, w + 2 * pw), spec.kernel_size, spec.stride,
                  spec.dilation, (ho, wo))
    return np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + w]), gw, gb


def transpose_output_hw(h, w, kernel, stride, padding) -> tuple[int, int]:
    (kh, kw), (sh, sw), (ph, pw) = _pair(kernel), _pair(stride), _pair(padding)
    ho = (h - 1) * sh - 2 * ph + kh
    wo = (w - 1) * sw - 2 * pw + kw
    if ho < 1 or wo < 1:
        raise DegenerateOutput(f"transposed convolution output would be {ho}x{wo}")
    return ho, wo


def conv2d_transpose(x, weights, bias, stride=1, padding=0) -> np.ndarray:
    """Transposed convolution, the adjoint of :func:`conv2d` in its input.

    ``weights`` is laid out (Cin, Cout, kh, kw) so the same array serves a
    forward convolution mapping Cout -> Cin.
    """
    _check_rank(x, 4, "conv2d_transpose input")
    _check_rank(weights, 4, "conv2d_transpose weights")
    if x.shape[1] != weights.shape[0]:
        raise ShapeMismatch(f"conv2d_transpose input has {x.shape[1]} channels, weights expect {weights.shape[0]}")
    cin, cout, kh, kw = weights.shape
    if bias is not None and bias.shape != (cout,):
        raise ShapeMismatch(f"conv2d_transpose bias {bias.shape}, expected ({cout},)")
    stride, padding = _pair(stride), _pair(padding)
    n, _, h, w = x.shape
    ho, wo = transpose_output_hw(h, w, (kh, kw), stride, padding)
    cols = weights.reshape(cin, -1).T @ x.transpose(1, 0, 2, 3).reshape(cin, -1)
    full = _col2im(cols, (n, cout, (h - 1) * stride[0] + kh, (w - 1) * stride[1] + kw), (kh, kw), stride, (1, 1),
                   (h, w))
    out = full[:, :, padding[0]:padding[0] + ho, padding[1]:padding[1] + wo]
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_transpose_backward(grad, x, weights, stride=1, padding=0):
    cin, cout, kh, kw = weights.shape
    stride, padding = _pair(stride), _pair(padding)
    n, _, h, w = x.shape
    cols = _im2col(_pad(grad, padding), (kh, kw), stride, (1, 1), (h, w))
    gx = (weights.reshape(cin, -1) @ cols).reshape(cin, n, h, w).transpose(1, 0, 2, 3)
    gw = (x.transpose(1, 0, 2, 3).reshape(cin, -1) @ cols.T).reshape(weights.shape)
    return np.ascontiguousarray(gx), gw, grad.sum(axis=(0, 2, 3))


def _pool_geometry(x, window, stride):
    _check_rank(x, 4, "pool2d input")
    window = _pair(window)
    stride = _pair(window if stride is None else stride)
    ho = (x.shape[2] - window[0]) // stride[0] + 1
    wo = (x.shape[3] - window[1]) // stride[1] + 1
    if x.shape[2] < window[0] or x.shape[3] < window[1] or ho < 1 or wo < 1:
        raise DegenerateOutput(f"pool window {window} does not fit input {x.shape[2:]}")
    return window, stride, (ho, wo)


def pool2d(x, kind="max", window=2, stride=None):
    """Windowed max or mean. Returns ``(out, argmax)``; argmax is None for avg.

    Max ties resolve to the first element in row-major window order.
    """
    window, stride, out_hw = _pool_geometry(x, window, stride)
    win = _windows(x, window, stride, (1, 1), out_hw)
    if kind == "max":
        flat = win.reshape(win.shape[:4] + (-1,))
        idx = flat.argmax(axis=-1)
        return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], idx
    if kind == "avg":
        return win.mean(axis=(4, 5)), None
    raise ValueError(f"unknown pool kind {kind!r}")


def pool2d_backward(grad, x_shape, kind, argmax, window=2, stride=None):
    window = _pair(window)
    stride = _pair(window if stride is None else stride)
    ho, wo = grad.shape[2:]
    gx = np.zeros(x_shape, dtype=DTYPE)
    area = window[0] * window[1]
    for k in range(area):
        i, j = divmod(k, window[1])
        rows = slice(i, i + stride[0] * (ho - 1) + 1, stride[0])
        cols = slice(j, j + stride[1] * (wo - 1) + 1, stride[1])
        if kind == "max":
            gx[:, :, rows, cols] += np.where(argmax == k, grad, 0.0)
        else:
            gx[:, :, rows, cols] += grad / area
    return gx


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    _check_rank(x, 4, "global_avg_pool input")
    return x.mean(axis=(2, 3))


def global_avg_pool_backward(grad, x_shape):
    h, w = x_shape[2:]
    return np.broadcast_to(grad[:, :, None, None] / (h * w), x_shape).copy()


def dense(x, weights, bias):
    _check_rank(x, 2, "dense input")
    if weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatch(f"dense: input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeMismatch(f"dense: bias {bias.shape}, expected ({weights.shape[1]},)")
    return x @ weights + bias


def dense_backward(grad, x, weights):
    return grad @ weights.T, x.T @ grad, grad.sum(axis=0)


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activate(x, kind="relu"):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(grad, x, out, kind="relu"):
    if kind == "relu":
        return np.where(x > 0, grad, 0.0)
    return grad * out * (1.0 - out)


def interp_matrix(src_len: int, dst_len: int) -> np.ndarray:
    """Corner-aligned linear interpolation weights of shape (dst_len, src_len).

    Destination index ``d`` samples source coordinate ``d*(src-1)/(dst-1)``;
    a single-pixel destination axis samples coordinate 0.
    """
    m = np.zeros((dst_len, src_len), dtype=DTYPE)
    if dst_len == 1 or src_len == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(dst_len) * (src_len - 1) / (dst_len - 1)
    lo = np.minimum(np.floor(pos).astype(int), src_len - 2)
    frac = pos - lo
    rows = np.arange(dst_len)
    m[rows, lo] += 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def resize_bilinear_tensor(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the two trailing axes."""
    if out_h < 1 or out_w < 1:
        raise DegenerateOutput(f"resize target {out_h}x{out_w}")
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return x.copy()
    return interp_matrix(h, out_h) @ x @ interp_matrix(w, out_w).T


def resize_bilinear_tensor_backward(grad, in_h: int, in_w: int):
    out_h, out_w = grad.shape[-2:]
    if (in_h, in_w) == (out_h, out_w):
        return grad.copy()
    return interp_matrix(in_h, out_h).T @ grad @ interp_matrix(in_w, out_w)
