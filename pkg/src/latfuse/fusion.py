"""Adaptive global fusion (AGF) and dynamic spatial fusion (DSF) of two latents.

AGF
    ``A = conv(concat(base, refined))`` gives two logit channels, a channel
    softmax turns them into per-pixel weights ``(w_base, w_refined)``, and
    ``fused = w_base * base + w_refined * refined``.

DSF
    ``gate = sigmoid(conv7x7(concat(mean_c(refined), max_c(base))))`` and
    ``fused = gate * refined + (1 - gate) * base``.  Average pooling reads
    the refined latent and max pooling the base latent.

Both weight maps are broadcast across the latent's channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import npyio
from .conv import Conv2dParams, conv2d, conv2d_backward
from .tensor import (
    ShapeError,
    argmax_channels,
    as_tensor,
    avg_pool_channels,
    broadcast_mul,
    concat_channels,
    elementwise,
    max_pool_channels,
    sigmoid,
    softmax_channels,
)

AGF_KERNEL_SIZES = (1, 7)
DSF_KERNEL_SIZE = 7


@dataclass(frozen=True)
class AgfModule:
    attn_conv: Conv2dParams
    channels: int

    def __post_init__(self):
        p = self.attn_conv
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if p.in_channels != 2 * self.channels or p.out_channels != 2:
            raise ShapeError(
                f"AGF conv must map {2 * self.channels} -> 2 channels, "
                f"got {p.in_channels} -> {p.out_channels}"
            )
        if p.kernel_size not in AGF_KERNEL_SIZES:
            raise ShapeError(f"AGF kernel size must be one of {AGF_KERNEL_SIZES}, got {p.kernel_size}")

    method = "agf"

    @property
    def conv(self) -> Conv2dParams:
        return self.attn_conv

    @property
    def kernel_size(self) -> int:
        return self.attn_conv.kernel_size

    def replace_conv(self, conv: Conv2dParams) -> "AgfModule":
        return AgfModule(conv, self.channels)

    def __call__(self, base, refined, impl="fast") -> "FusionOutput":
        return agf_forward(self, base, refined, impl)


@dataclass(frozen=True)
class DsfModule:
    spatial_conv: Conv2dParams
    # Latent channel count; the conv itself is channel-agnostic.
    channels: int | None = None

    def __post_init__(self):
        p = self.spatial_conv
        if p.in_channels != 2 or p.out_channels != 1 or p.kernel_size != DSF_KERNEL_SIZE:
            raise ShapeError(
                "DSF conv must be 2 -> 1 channels with a 7x7 kernel, got "
                f"{p.in_channels} -> {p.out_channels}, k={p.kernel_size}"
            )

    method = "dsf"

    @property
    def conv(self) -> Conv2dParams:
        return self.spatial_conv

    @property
    def kernel_size(self) -> int:
        return DSF_KERNEL_SIZE

    def replace_conv(self, conv: Conv2dParams) -> "DsfModule":
        return DsfModule(conv, self.channels)

    def __call__(self, base, refined, impl="fast") -> "FusionOutput":
        return dsf_forward(self, base, refined, impl)


class FusionOutput(NamedTuple):
    fused: np.ndarray
    #: AGF: ``(n, 2, h, w)`` holding (w_base, w_refined); DSF: ``(n, 1, h, w)`` gate.
    maps: np.ndarray


class FusionGrads(NamedTuple):
    base: np.ndarray
    refined: np.ndarray
    weights: np.ndarray
    bias: np.ndarray


def _check_pair(base, refined, channels=None):
    base, refined = as_tensor(base), as_tensor(refined)
    if base.shape != refined.shape:
        raise ShapeError(f"base shape {base.shape} != refined shape {refined.shape}")
    if base.dtype != refined.dtype:
        raise TypeError(f"base dtype {base.dtype} != refined dtype {refined.dtype}")
    if channels is not None and base.shape[1] != channels:
        raise ShapeError(f"latents have {base.shape[1]} channels, module expects {channels}")
    return base, refined


def agf_forward(m: AgfModule, base, refined, impl: str = "fast") -> FusionOutput:
    base, refined = _check_pair(base, refined, m.channels)
    logits = conv2d(concat_channels(base, refined), m.attn_conv, impl)
    weights = softmax_channels(logits)
    fused = elementwise(
        "add",
        broadcast_mul(weights[:, 0:1], base),
        broadcast_mul(weights[:, 1:2], refined),
    )
    return FusionOutput(fused, weights)


def _dsf_features(base, refined):
    return concat_channels(avg_pool_channels(refined), max_pool_channels(base))


def dsf_forward(m: DsfModule, base, refined, impl: str = "fast") -> FusionOutput:
    base, refined = _check_pair(base, refined, m.channels)
    gate = sigmoid(conv2d(_dsf_features(base, refined), m.spatial_conv, impl))
    one_minus = 1 - gate
    fused = elementwise(
        "add",
        broadcast_mul(gate, refined),
        broadcast_mul(one_minus, base),
    )
    return FusionOutput(fused, gate)


def agf_backward(m: AgfModule, base, refined, grad_fused) -> FusionGrads:
    """Gradients of ``sum(agf_forward(...).fused * grad_fused)``."""
    base, refined = _check_pair(base, refined, m.channels)
    g = as_tensor(grad_fused, dtype=base.dtype)
    if g.shape != base.shape:
        raise ShapeError(f"grad_fused shape {g.shape} != latent shape {base.shape}")
    conv = m.attn_conv.astype(base.dtype)
    x = concat_channels(base, refined)
    w = softmax_channels(conv2d(x, conv))
    w_b, w_r = w[:, 0:1], w[:, 1:2]

    d_w = np.concatenate(
        [(g * base).sum(axis=1, keepdims=True), (g * refined).sum(axis=1, keepdims=True)],
        axis=1,
    )
    d_logits = w * (d_w - (w * d_w).sum(axis=1, keepdims=True))
    d_x, d_weights, d_bias = conv2d_backward(x, conv, d_logits)

    c = m.channels
    return FusionGrads(
        w_b * g + d_x[:, :c],
        w_r * g + d_x[:, c:],
        d_weights,
        d_bias,
    )


def dsf_backward(m: DsfModule, base, refined, grad_fused) -> FusionGrads:
    """Gradients of ``sum(dsf_forward(...).fused * grad_fused)``.

    The max-pool gradient goes to the lowest-index maximal channel of ``base``.
    """
    base, refined = _check_pair(base, refined, m.channels)
    g = as_tensor(grad_fused, dtype=base.dtype)
    if g.shape != base.shape:
        raise ShapeError(f"grad_fused shape {g.shape} != latent shape {base.shape}")
    conv = m.spatial_conv.astype(base.dtype)
    feats = _dsf_features(base, refined)
    gate = sigmoid(conv2d(feats, conv))

    d_gate = (g * (refined - base)).sum(axis=1, keepdims=True)
    d_z = d_gate * gate * (1 - gate)
    d_feats, d_weights, d_bias = conv2d_backward(feats, conv, d_z)

    c = base.shape[1]
    grad_refined = gate * g + d_feats[:, 0:1] / c
    grad_base = (1 - gate) * g
    winner = argmax_channels(base)
    np.put_along_axis(
        grad_base,
        winner,
        np.take_along_axis(grad_base, winner, axis=1) + d_feats[:, 1:2],
        axis=1,
    )
    return FusionGrads(grad_base, grad_refined, d_weights, d_bias)


def fusion_forward(m, base, refined, impl: str = "fast") -> FusionOutput:
    if isinstance(m, AgfModule):
        return agf_forward(m, base, refined, impl)
    if isinstance(m, DsfModule):
        return dsf_forward(m, base, refined, impl)
    raise TypeError(f"not a fusion module: {type(m).__name__}")


def fusion_backward(m, base, refined, grad_fused) -> FusionGrads:
    if isinstance(m, AgfModule):
        return agf_backward(m, base, refined, grad_fused)
    if isinstance(m, DsfModule):
        return dsf_backward(m, base, refined, grad_fused)
    raise TypeError(f"not a fusion module: {type(m).__name__}")


def _conv_shape(method: str, channels: int, kernel_size: int | None):
    if method == "agf":
        k = 1 if kernel_size is None else kernel_size
        if k not in AGF_KERNEL_SIZES:
            raise ValueError(f"AGF kernel size must be one of {AGF_KERNEL_SIZES}, got {k}")
        return 2, 2 * channels, k
    if method == "dsf":
        k = DSF_KERNEL_SIZE if kernel_size is None else kernel_size
        if k != DSF_KERNEL_SIZE:
            raise ValueError(f"DSF kernel size is fixed at {DSF_KERNEL_SIZE}, got {k}")
        return 1, 2, k
    raise ValueError(f"unknown fusion method {method!r}; expected 'agf' or 'dsf'")


def _build(method, conv, channels):
    return AgfModule(conv, channels) if method == "agf" else DsfModule(conv, channels)


def init_params(method: str, channels: int, kernel_size: int | None = None, *,
                init: str = "zeros", scale: float = 0.1, seed: int = 0,
                dtype=np.float32):
    """Build an AGF or DSF module with deterministic parameters.

    ``init="zeros"`` gives the neutral fuser (equal weights everywhere).
    ``init="uniform"`` draws weights and bias from ``U[-scale, scale]`` with a
    PCG64 stream seeded by ``seed``.  AGF defaults to a 1x1 attention conv.
    """
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    out_c, in_c, k = _conv_shape(method, channels, kernel_size)
    if init == "zeros":
        conv = Conv2dParams.zeros(out_c, in_c, k, dtype)
    elif init == "uniform":
        if not scale >= 0:
            raise ValueError(f"scale must be non-negative, got {scale}")
        rng = np.random.Generator(np.random.PCG64(seed))
        w = rng.uniform(-scale, scale, (out_c, in_c, k, k))
        b = rng.uniform(-scale, scale, out_c)
        conv = Conv2dParams(w.astype(dtype), b.astype(dtype))
    else:
        raise ValueError(f"unknown init {init!r}; expected 'zeros' or 'uniform'")
    return _build(method, conv, channels)


def save_params(m, path) -> Path:
    """Write ``<stem>.weights.npy``, ``<stem>.bias.npy`` and the JSON manifest at ``path``."""
    path = Path(path)
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    files = {"weights": f"{stem}.weights.npy", "bias": f"{stem}.bias.npy"}
    npyio.write_latent(m.conv.weights, path.parent / files["weights"])
    npyio.write_latent(m.conv.bias, path.parent / files["bias"])
    manifest = {
        "method": m.method,
        "channels": m.channels,
        "kernel_size": m.kernel_size,
        "files": files,
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_params(manifest_path):
    """Load a module from a manifest; tensor paths resolve relative to the manifest."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    try:
        method = manifest["method"]
        channels = manifest["channels"]
        k = manifest["kernel_size"]
        files = manifest["files"]
        w_file, b_file = files["weights"], files["bias"]
    except (KeyError, TypeError) as e:
        raise ValueError(f"manifest {manifest_path} is missing field {e}") from None
    if method == "dsf" and channels is None:
        # Channel count is optional for DSF; the conv does not depend on it.
        out_c, in_c, k = _conv_shape(method, 1, k)
    else:
        if not isinstance(channels, int) or channels < 1:
            raise ValueError(f"manifest channels must be a positive int, got {channels!r}")
        out_c, in_c, k = _conv_shape(method, channels, k)

    root = manifest_path.parent
    weights = npyio.read_array(root / w_file)
    bias = npyio.read_array(root / b_file)
    if weights.shape != (out_c, in_c, k, k):
        raise ShapeError(
            f"weights file has shape {weights.shape}, manifest implies {(out_c, in_c, k, k)}"
        )
    if bias.shape != (out_c,):
        raise ShapeError(f"bias file has shape {bias.shape}, manifest implies {(out_c,)}")
    return _build(method, Conv2dParams(weights, bias), channels)
