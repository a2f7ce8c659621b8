"""Rank-4 NCHW tensor helpers.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 or float64 with
exactly four axes ``(n, c, h, w)``, every axis at least 1.  Functions here
never mutate their inputs and always return freshly allocated C-contiguous
arrays.
"""

from __future__ import annotations

import numpy as np

AXES = ("n", "c", "h", "w")
DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


def as_tensor(x, dtype=None) -> np.ndarray:
    """Validate ``x`` as an NCHW tensor and return it as a contiguous array.

    ``dtype`` forces a cast; otherwise float32/float64 are kept and anything
    else is rejected.
    """
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    if arr.dtype not in DTYPES:
        raise TypeError(f"unsupported dtype {arr.dtype}; expected float32 or float64")
    if arr.ndim != 4:
        raise ShapeError(f"expected rank-4 NCHW tensor, got shape {arr.shape}")
    for name, size in zip(AXES, arr.shape):
        if size < 1:
            raise ShapeError(f"axis {name} has size {size}; all axes must be >= 1")
    return np.ascontiguousarray(arr)


def zeros(shape, dtype=np.float32) -> np.ndarray:
    return as_tensor(np.zeros(shape, dtype=dtype))


def ones(shape, dtype=np.float32) -> np.ndarray:
    return as_tensor(np.ones(shape, dtype=dtype))


def _check_same_dtype(a, b):
    if a.dtype != b.dtype:
        raise TypeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")


def _check_axes(a, b, axes, what):
    for ax in axes:
        i = AXES.index(ax)
        if a.shape[i] != b.shape[i]:
            raise ShapeError(
                f"{what}: axis {ax} differs ({a.shape[i]} vs {b.shape[i]}); "
                f"shapes {a.shape} and {b.shape}"
            )


def concat_channels(a, b) -> np.ndarray:
    """Stack ``a`` then ``b`` along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same_dtype(a, b)
    _check_axes(a, b, ("n", "h", "w"), "concat_channels")
    return np.concatenate([a, b], axis=1)


def split_channels(x, at: int):
    """Inverse of :func:`concat_channels`: split ``x`` after channel ``at``."""
    x = as_tensor(x)
    if not 0 < at < x.shape[1]:
        raise ShapeError(f"split index {at} outside (0, {x.shape[1]})")
    return np.ascontiguousarray(x[:, :at]), np.ascontiguousarray(x[:, at:])


def softmax_channels(x) -> np.ndarray:
    """Softmax over the channel axis, computed after subtracting the per-pixel max."""
    x = as_tensor(x)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x) -> np.ndarray:
    """Logistic function, evaluated on the branch that cannot overflow."""
    x = as_tensor(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def avg_pool_channels(x) -> np.ndarray:
    """Per-pixel mean over channels, shape ``(n, 1, h, w)``.

    Channels are summed left to right and divided once, so the result is a
    fixed function of the input regardless of numpy's pairwise-sum blocking.
    """
    x = as_tensor(x)
    acc = x[:, 0:1].copy()
    for c in range(1, x.shape[1]):
        acc += x[:, c:c + 1]
    if x.shape[1] > 1:
        acc /= x.dtype.type(x.shape[1])
    return acc


def max_pool_channels(x) -> np.ndarray:
    """Per-pixel maximum over channels, shape ``(n, 1, h, w)``.

    The value is read from the lowest-index maximal channel, the same one
    gradients are routed to, so ties such as ``-0.0`` vs ``0.0`` resolve
    deterministically.
    """
    x = as_tensor(x)
    return np.take_along_axis(x, argmax_channels(x), axis=1)


def argmax_channels(x) -> np.ndarray:
    """Index of the lowest-numbered maximal channel at each pixel, shape ``(n, 1, h, w)``."""
    x = as_tensor(x)
    return x.argmax(axis=1)[:, None]


_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(op: str, a, b) -> np.ndarray:
    try:
        fn = _BINARY[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_BINARY)}") from None
    a, b = as_tensor(a), as_tensor(b)
    _check_same_dtype(a, b)
    _check_axes(a, b, AXES, f"elementwise {op}")
    return fn(a, b)


def broadcast_mul(map_, x) -> np.ndarray:
    """Multiply ``x`` by a map that is either the same shape or single-channel.

    A single-channel map is repeated across every channel of ``x`` at each pixel.
    """
    map_, x = as_tensor(map_), as_tensor(x)
    _check_same_dtype(map_, x)
    if map_.shape[1] == 1:
        _check_axes(map_, x, ("n", "h", "w"), "broadcast_mul")
    else:
        _check_axes(map_, x, AXES, "broadcast_mul")
    return map_ * x
