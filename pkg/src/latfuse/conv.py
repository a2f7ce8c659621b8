"""Same-padded 2-D cross-correlation.

Two forward kernels compute the identical function:

* :func:`conv2d_naive` is the direct definition, one output element at a time.
* :func:`conv2d_fast` zero-pads the columns once, keeps a per-row accumulator
  and lets the innermost loop run over contiguous columns, parallel over
  output rows.

Both accumulate each output element in the same order (input channel, then
kernel row, then kernel column, bias last), so their outputs are bit-identical.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .tensor import ShapeError, as_tensor

# Raised once per process when an old TBB is installed; numba falls back to
# another threading layer, which is all we need.
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)


@dataclass(frozen=True)
class Conv2dParams:
    """Weights ``(out_channels, in_channels, k, k)`` and bias ``(out_channels,)``."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights)
        b = np.ascontiguousarray(self.bias)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"weights must be (out, in, k, k), got {w.shape}")
        if w.shape[2] % 2 != 1:
            raise ShapeError(f"kernel size must be odd, got {w.shape[2]}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match out_channels {w.shape[0]}")
        if w.dtype != b.dtype:
            raise TypeError(f"weights dtype {w.dtype} != bias dtype {b.dtype}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("convolution parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def zeros(cls, out_channels, in_channels, kernel_size, dtype=np.float32):
        return cls(
            np.zeros((out_channels, in_channels, kernel_size, kernel_size), dtype=dtype),
            np.zeros(out_channels, dtype=dtype),
        )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def padding(self) -> int:
        return self.kernel_size // 2

    @property
    def dtype(self):
        return self.weights.dtype

    def astype(self, dtype) -> "Conv2dParams":
        return Conv2dParams(self.weights.astype(dtype), self.bias.astype(dtype))


def macs(x_shape, p: Conv2dParams) -> int:
    """Multiply-accumulate count of one forward pass (bias additions excluded)."""
    n, _, h, w = x_shape
    return n * h * w * p.out_channels * p.in_channels * p.kernel_size ** 2


@numba.njit(cache=True)
def _naive_kernel(x, w, b):
    n_, ci_, h_, w_ = x.shape
    co_, _, k, _ = w.shape
    p = k // 2
    out = np.empty((n_, co_, h_, w_), dtype=x.dtype)
    for n in range(n_):
        for co in range(co_):
            for i in range(h_):
                for j in range(w_):
                    out[n, co, i, j] = 0
                    for ci in range(ci_):
                        for u in range(k):
                            for v in range(k):
                                iy = i + u - p
                                ix = j + v - p
                                if 0 <= iy < h_ and 0 <= ix < w_:
                                    out[n, co, i, j] += w[co, ci, u, v] * x[n, ci, iy, ix]
                    out[n, co, i, j] += b[co]
    return out


@numba.njit(parallel=True, cache=True)
def _fast_kernel(x, w, b):
    n_, ci_, h_, w_ = x.shape
    co_, _, k, _ = w.shape
    p = k // 2
    out = np.empty((n_, co_, h_, w_), dtype=x.dtype)
    # Padded zeros contribute w*0 == +-0, which never changes a running sum.
    xp = np.zeros((n_, ci_, h_, w_ + 2 * p), dtype=x.dtype)
    xp[:, :, :, p:p + w_] = x
    rows = n_ * co_ * h_
    for r in numba.prange(rows):
        n = r // (co_ * h_)
        co = (r // h_) % co_
        i = r % h_
        acc = np.zeros(w_, dtype=x.dtype)
        for ci in range(ci_):
            for u in range(k):
                iy = i + u - p
                if iy < 0 or iy >= h_:
                    continue
                for v in range(k):
                    wv = w[co, ci, u, v]
                    for j in range(w_):
                        acc[j] += wv * xp[n, ci, iy, j + v]
        bv = b[co]
        for j in range(w_):
            out[n, co, i, j] = acc[j] + bv
    return out


def _prepare(x, p: Conv2dParams):
    x = as_tensor(x)
    if x.shape[1] != p.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, convolution expects {p.in_channels}"
        )
    if p.dtype != x.dtype:
        p = p.astype(x.dtype)
    return x, p


def conv2d_naive(x, p: Conv2dParams) -> np.ndarray:
    """Reference cross-correlation with zero padding, one element at a time."""
    x, p = _prepare(x, p)
    return _naive_kernel(x, p.weights, p.bias)


def conv2d_fast(x, p: Conv2dParams) -> np.ndarray:
    x, p = _prepare(x, p)
    return _fast_kernel(x, p.weights, p.bias)


def conv2d(x, p: Conv2dParams, impl: str = "fast") -> np.ndarray:
    if impl == "fast":
        return conv2d_fast(x, p)
    if impl == "naive":
        return conv2d_naive(x, p)
    raise ValueError(f"unknown conv impl {impl!r}")


def conv2d_backward(x, p: Conv2dParams, grad_out):
    """Gradients of ``sum(conv2d(x, p) * grad_out)``.

    Returns ``(grad_x, grad_weights, grad_bias)``.
    """
    x, p = _prepare(x, p)
    g = as_tensor(grad_out, dtype=x.dtype)
    n, _, h, w = x.shape
    if g.shape != (n, p.out_channels, h, w):
        raise ShapeError(f"grad_out shape {g.shape} != forward output {(n, p.out_channels, h, w)}")
    k, pad = p.kernel_size, p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(p.weights)
    for u in range(k):
        for v in range(k):
            window = xp[:, :, u:u + h, v:v + w]
            gw[:, :, u, v] = np.einsum("nohw,nihw->oi", g, window)
            gxp[:, :, u:u + h, v:v + w] += np.einsum("oi,nohw->nihw", p.weights[:, :, u, v], g)
    gx = gxp[:, :, pad:pad + h, pad:pad + w]
    gb = g.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), gw, gb


def set_threads(n: int | None = None) -> int:
    """Cap the worker count used by :func:`conv2d_fast`.

    ``None`` reads ``LATFUSE_THREADS``; requests above the available pool are
    clamped.  Returns the count actually in effect.  Results do not depend on it.
    """
    if n is None:
        env = os.environ.get("LATFUSE_THREADS")
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n
