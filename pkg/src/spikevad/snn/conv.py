"""Temporal convolutions over the clip axis.

All kernels operate on arrays shaped ``[..., t, C]``: the clip axis is the
second to last, channels are last, any leading axes are batch.
"""

from __future__ import annotations

import numpy as np


def _check_kernel(kernel: np.ndarray, dilation: int) -> int:
    if kernel.ndim != 3:
        raise ValueError(f"kernel must be [C_out, C_in, w], got {kernel.shape}")
    width = kernel.shape[2]
    if width % 2 == 0:
        raise ValueError(f"kernel width must be odd, got {width}")
    if int(dilation) != dilation or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    return width


def _taps(width: int, dilation: int):
    half = (width - 1) // 2
    return [(m, (m - half) * dilation) for m in range(width)]


def _shift(x: np.ndarray, offset: int) -> np.ndarray:
    """``out[..., i, :] = x[..., i + offset, :]``, zero outside bounds."""
    t = x.shape[-2]
    out = np.zeros_like(x)
    if abs(offset) >= t:
        return out
    if offset >= 0:
        out[..., : t - offset, :] = x[..., offset:, :]
    else:
        out[..., -offset:, :] = x[..., : t + offset, :]
    return out


def dilated_conv1d(x: np.ndarray, kernel: np.ndarray, dilation: int = 1) -> np.ndarray:
    """Same-length dilated convolution along the clip axis.

    ``out[i, p] = sum_d sum_m kernel[p, d, m] * x[i + (m - (w-1)/2) * dilation, d]``
    with zeros outside ``[0, t)``.
    """
    x = np.asarray(x, dtype=np.float64)
    width = _check_kernel(kernel, dilation)
    if x.shape[-1] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {kernel.shape[1]}")
    out = np.zeros(x.shape[:-1] + (kernel.shape[0],))
    for m, off in _taps(width, dilation):
        out += _shift(x, off) @ kernel[:, :, m].T
    return out


def dilated_conv1d_vjp(g: np.ndarray, x: np.ndarray, kernel: np.ndarray,
                       dilation: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``dilated_conv1d`` w.r.t. input and kernel."""
    width = kernel.shape[2]
    gx = np.zeros(x.shape)
    gk = np.zeros(kernel.shape)
    g2 = g.reshape(-1, g.shape[-1])
    for m, off in _taps(width, dilation):
        xs = _shift(x, off)
        gk[:, :, m] = g2.T @ xs.reshape(-1, xs.shape[-1])
        gx += _shift(g @ kernel[:, :, m], -off)
    return gx, gk


def pointwise_conv(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """1x1 convolution: a per-position linear map ``[t, D] -> [t, D_out]``."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != x.shape[-1]:
        raise ValueError(f"weight {weight.shape} incompatible with input {x.shape}")
    return x @ weight.T


def depthwise_conv1d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel same-padded convolution, ``kernel`` shaped ``[C, w]``."""
    width = kernel.shape[1]
    if width % 2 == 0:
        raise ValueError(f"kernel width must be odd, got {width}")
    out = np.zeros(x.shape)
    for m, off in _taps(width, 1):
        out += _shift(x, off) * kernel[:, m]
    return out


def depthwise_conv1d_vjp(g, x, kernel):
    width = kernel.shape[1]
    gx = np.zeros(x.shape)
    gk = np.zeros(kernel.shape)
    for m, off in _taps(width, 1):
        xs = _shift(x, off)
        gk[:, m] = (g * xs).reshape(-1, x.shape[-1]).sum(axis=0)
        gx += _shift(g * kernel[:, m], -off)
    return gx, gk
