"""Differentiable building blocks on top of the tensor primitives.

Shapes follow the conventions used throughout the network: token matrices
are ``(tokens, channels)``, image features are ``(channels, height, width)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import erf as _erf

from ..errors import ContractError, DimensionError
from .tensor import Tensor

__all__ = [
    "softmax", "layer_norm", "gelu", "linear",
    "conv2d", "upsample2x_bilinear", "gather_pixels",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis``: exp-normalize after max subtraction.

    The subtracted maximum is a constant shift, so detaching it from the
    graph leaves the gradient exact.
    """
    if x.shape[axis] == 0:
        raise ContractError("softmax over an empty axis")
    shift = Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize each row (last axis) to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ContractError("layer_norm requires eps > 0")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gain + bias


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    z = x.data
    phi = 0.5 * (1.0 + _erf(z * _INV_SQRT2))
    out = z * phi
    pdf = _INV_SQRT2PI * np.exp(-0.5 * z * z)
    return Tensor._node(out, (x,), lambda g: (g * (phi + z * pdf),), "gelu")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Row-wise affine map: ``x @ weight (+ bias)``."""
    out = x @ weight
    return out if bias is None else out + bias


def _im2col(padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(C, Hp, Wp) -> (C*kh*kw, Ho*Wo) patch matrix."""
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride, :, :]            # (C, Ho, Wo, kh, kw)
    c, ho, wo = windows.shape[:3]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation of a (C, H, W) map with (Co, C, kh, kw) kernels.

    Output spatial size is ``floor((H + 2*pad - k) / stride) + 1`` per axis.
    """
    if x.ndim != 3 or weight.ndim != 4:
        raise DimensionError(
            f"conv2d expects (C,H,W) input and (Co,C,kh,kw) weight, got {x.shape} and {weight.shape}")
    c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise DimensionError(f"conv2d channel mismatch: input has {c}, weight expects {ci}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise DimensionError(
            f"kernel ({kh}x{kw}) larger than padded input ({hp}x{wp})")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    padded = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(padded, kh, kw, stride)                    # (C*kh*kw, L)
    wmat = weight.data.reshape(co, c * kh * kw)
    out = wmat @ cols                                         # (Co, L)
    if bias is not None:
        out = out + bias.data[:, None]
    out = out.reshape(co, ho, wo)

    def back(g):
        gmat = g.reshape(co, ho * wo)
        grad_w = (gmat @ cols.T).reshape(weight.shape)
        grad_b = gmat.sum(axis=1) if bias is not None else None
        grad_cols = wmat.T @ gmat                             # (C*kh*kw, L)
        grad_cols = grad_cols.reshape(c, kh, kw, ho, wo)
        grad_padded = np.zeros((c, hp, wp))
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, i:i + ho * stride:stride, j:j + wo * stride:stride] += grad_cols[:, i, j]
        grad_x = grad_padded[:, pad:pad + h, pad:pad + w] if pad else grad_padded
        if bias is not None:
            return grad_x, grad_w, grad_b
        return grad_x, grad_w

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._node(out, parents, back, "conv2d")


@lru_cache(maxsize=32)
def _upsample_matrix(n: int) -> np.ndarray:
    """(2n, n) bilinear interpolation matrix with border replication."""
    m = np.zeros((2 * n, n))
    for i in range(2 * n):
        src = (i + 0.5) / 2.0 - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        lo_c = min(max(lo, 0), n - 1)
        hi_c = min(max(lo + 1, 0), n - 1)
        m[i, lo_c] += 1.0 - frac
        m[i, hi_c] += frac
    return m


def upsample2x_bilinear(x: Tensor) -> Tensor:
    """Double the spatial extents of a (C, H, W) map by bilinear interpolation.

    Expressed as two constant-matrix products, so the gradient falls out of
    the matmul rule.
    """
    c, h, w = x.shape
    uh = Tensor(_upsample_matrix(h))
    uw = Tensor(_upsample_matrix(w))
    rows = (uh @ x.transpose(1, 0, 2).reshape(h, c * w)).reshape(2 * h, c, w).transpose(1, 0, 2)
    cols = (rows.reshape(c * 2 * h, w) @ uw.T).reshape(c, 2 * h, 2 * w)
    return cols


def gather_pixels(img: Tensor, iy: np.ndarray, ix: np.ndarray) -> Tensor:
    """Index an (H, W, ...) tensor at integer pixel coordinates.

    ``iy``/``ix`` are constant integer arrays of identical shape; the result
    has their shape plus any trailing image axes. Gradients scatter-add back.
    """
    return img[(iy, ix)]
