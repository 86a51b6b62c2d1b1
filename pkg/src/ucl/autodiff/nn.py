"""Convolution, normalization and pooling operations on [B, C, H, W] tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor

__all__ = [
    "conv2d", "depthwise_conv2d", "depthwise_separable_conv2d", "BatchNormState",
    "batch_norm2d", "max_pool2d", "global_avg_pool2d", "conv_output_size",
]


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _check_geometry(x: Tensor, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    if x.ndim != 4:
        raise ValueError(f"expected a [B,C,H,W] input, got shape {x.shape}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    H, W = x.shape[2:]
    if kh > H + 2 * padding or kw > W + 2 * padding:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {H + 2 * padding}x{W + 2 * padding}")
    return conv_output_size(H, kh, stride, padding), conv_output_size(W, kw, stride, padding)


def _pad(a: np.ndarray, p: int) -> np.ndarray:
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p))) if p else a


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """[B,C,H',W',kh,kw] strided view of the padded input."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _scatter_windows(gwin: np.ndarray, padded_shape, kh, kw, stride, Ho, Wo) -> np.ndarray:
    """Adjoint of ``_windows``: gwin is [B,C,H',W',kh,kw]."""
    gxp = np.zeros(padded_shape, dtype=gwin.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gwin[..., i, j]
    return gxp


def conv2d(x, kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` [B,C,H,W] with ``kernels`` [F,C,kh,kw]."""
    x, w = as_tensor(x), as_tensor(kernels)
    if w.ndim != 4:
        raise ValueError(f"kernels must be [F,C,kh,kw], got {w.shape}")
    F, C, kh, kw = w.shape
    if x.ndim == 4 and x.shape[1] != C:
        raise ValueError(f"input has {x.shape[1]} channels, kernels expect {C}")
    Ho, Wo = _check_geometry(x, kh, kw, stride, padding)
    xp = _pad(x.data, padding)
    win = _windows(xp, kh, kw, stride)
    # [B,H',W',F] -> [B,F,H',W']
    out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def bw(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(w.data[:, :, i, j], g, axes=([0], [1])).transpose(1, 0, 2, 3)
                    gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += contrib
            gx = gxp[:, :, padding:padding + x.shape[2], padding:padding + x.shape[3]] if padding else gxp
            gx = np.ascontiguousarray(gx)
        return gx, gw

    return Tensor._from_op(out, "conv2d", (x, w), bw)


def depthwise_conv2d(x, kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel spatial convolution; ``kernels`` is [C,1,kh,kw]."""
    x, w = as_tensor(x), as_tensor(kernels)
    if w.ndim != 4 or w.shape[1] != 1:
        raise ValueError(f"depthwise kernels must be [C,1,kh,kw], got {w.shape}")
    C, _, kh, kw = w.shape
    if x.ndim == 4 and x.shape[1] != C:
        raise ValueError(f"channel count mismatch: input has {x.shape[1]}, depthwise kernels {C}")
    Ho, Wo = _check_geometry(x, kh, kw, stride, padding)
    xp = _pad(x.data, padding)
    k = w.data[:, 0]
    out = np.zeros((x.shape[0], C, Ho, Wo), dtype=np.result_type(x.dtype, w.dtype))
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] * k[None, :, i, j, None, None]

    def bw(g):
        gw = gx = None
        if w.requires_grad:
            gk = np.empty_like(k)
            for i in range(kh):
                for j in range(kw):
                    sl = xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
                    gk[:, i, j] = np.einsum("bchw,bchw->c", sl, g)
            gw = gk[:, None]
        if x.requires_grad:
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += g * k[None, :, i, j, None, None]
            gx = gxp[:, :, padding:padding + x.shape[2], padding:padding + x.shape[3]] if padding else gxp
            gx = np.ascontiguousarray(gx)
        return gx, gw

    return Tensor._from_op(out, "depthwise_conv2d", (x, w), bw)


def depthwise_separable_conv2d(x, depthwise_kernels, pointwise_kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """Depthwise spatial convolution followed by a 1x1 channel-mixing convolution."""
    dw, pw = as_tensor(depthwise_kernels), as_tensor(pointwise_kernels)
    if pw.ndim != 4 or pw.shape[2:] != (1, 1):
        raise ValueError(f"pointwise kernels must be [F,C,1,1], got {pw.shape}")
    if pw.shape[1] != dw.shape[0]:
        raise ValueError(f"channel count mismatch between stages: depthwise produces {dw.shape[0]}, "
                         f"pointwise expects {pw.shape[1]}")
    return conv2d(depthwise_conv2d(x, dw, stride, padding), pw)


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer."""

    num_features: int
    momentum: float = 0.1
    eps: float = 1e-5
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None
    updates: int = field(default=0)

    def __post_init__(self):
        if self.running_mean is None:
            self.running_mean = np.zeros(self.num_features, dtype=np.float32)
        if self.running_var is None:
            self.running_var = np.ones(self.num_features, dtype=np.float32)


def batch_norm2d(x, gamma, beta, state: BatchNormState, mode: str = "train") -> Tensor:
    """Per-channel normalization.

    ``train`` normalizes with batch statistics (biased variance) and folds the
    unbiased variance into the running estimate; ``eval`` uses the running
    statistics and refuses to run before the first update.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4:
        raise ValueError(f"expected [B,C,H,W], got {x.shape}")
    B, C, H, W = x.shape
    if C != state.num_features or gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batch_norm2d: {C} channels vs. parameters for {state.num_features}")
    g4 = gamma.data[None, :, None, None]
    eps = state.eps

    if mode == "train":
        m = B * H * W
        if m < 2:
            raise ValueError("train-mode batch norm needs at least 2 values per channel")
        mu = x.data.mean(axis=(0, 2, 3), keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=(0, 2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        mom = state.momentum
        rm = (1 - mom) * state.running_mean + mom * mu.reshape(C)
        rv = (1 - mom) * state.running_var + mom * var.reshape(C) * (m / (m - 1))
        state.running_mean = rm.astype(state.running_mean.dtype)
        state.running_var = rv.astype(state.running_var.dtype)
        state.updates += 1

        def bw(g):
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
            gbeta = g.sum(axis=(0, 2, 3))
            gx = None
            if x.requires_grad:
                gxhat = g * g4
                gx = inv * (gxhat - gxhat.mean(axis=(0, 2, 3), keepdims=True)
                            - xhat * (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True))
                gx = gx.astype(x.dtype)
            return gx, ggamma.astype(gamma.dtype), gbeta.astype(beta.dtype)
    elif mode == "eval":
        if state.updates == 0:
            raise RuntimeError("batch_norm2d in eval mode before any running-statistics update")
        mu = state.running_mean.astype(x.dtype)[None, :, None, None]
        inv = (1.0 / np.sqrt(state.running_var.astype(x.dtype) + eps))[None, :, None, None]
        xhat = (x.data - mu) * inv

        def bw(g):
            return (g * g4 * inv).astype(x.dtype), (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))
    else:
        raise ValueError(f"unknown batch-norm mode {mode!r}")

    out = (xhat * g4 + beta.data[None, :, None, None]).astype(x.dtype)
    return Tensor._from_op(out, "batch_norm2d", (x, gamma, beta), bw)


def max_pool2d(x, kernel: int = 2, stride: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    stride = stride or kernel
    Ho, Wo = _check_geometry(x, kernel, kernel, stride, 0)
    B, C = x.shape[:2]
    if stride == kernel:
        # non-overlapping tiles: a reshape replaces the window gather
        xs = x.data[:, :, :Ho * kernel, :Wo * kernel]
        flat = xs.reshape(B, C, Ho, kernel, Wo, kernel).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, -1)
    else:
        flat = _windows(x.data, kernel, kernel, stride).reshape(B, C, Ho, Wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gflat = np.zeros((B, C, Ho, Wo, kernel * kernel), dtype=g.dtype)
        np.put_along_axis(gflat, arg[..., None], g[..., None], axis=-1)
        gwin = gflat.reshape(B, C, Ho, Wo, kernel, kernel)
        if stride == kernel:
            gx = np.zeros(x.shape, dtype=g.dtype)
            gx[:, :, :Ho * kernel, :Wo * kernel] = gwin.transpose(0, 1, 2, 4, 3, 5).reshape(
                B, C, Ho * kernel, Wo * kernel)
            return (gx,)
        return (_scatter_windows(gwin, x.shape, kernel, kernel, stride, Ho, Wo),)

    return Tensor._from_op(np.ascontiguousarray(out), "max_pool2d", (x,), bw)


def global_avg_pool2d(x) -> Tensor:
    """[B,C,H,W] -> [B,C]"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"expected [B,C,H,W], got {x.shape}")
    H, W = x.shape[2:]
    out = x.data.mean(axis=(2, 3))

    def bw(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).astype(x.dtype),)

    return Tensor._from_op(out, "global_avg_pool2d", (x,), bw)
