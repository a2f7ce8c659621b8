"""Seeded synthetic latents standing in for base / refined diffusion outputs.

Randomness comes from numpy's PCG64 bit generator only; raw 64-bit words
are turned into doubles here (top 53 bits times 2**-53) so that streams do not
depend on numpy's distribution code.  Each purpose draws from its own
stream, ``SeedSequence(seed, spawn_key=(stream, member))``:

====== ==================================
stream purpose
====== ==================================
0      i.i.d. uniform noise
1      low-frequency structure sinusoids
2      high-frequency detail sinusoids
====== ==================================

``member`` is 0, or 1 for the second latent of an independent pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import AXES, as_tensor

KINDS = ("noise", "lowfreq", "highfreq", "structured-pair")
TERMS = 4
HIGHFREQ_GAIN = 0.5
DETAIL_GAIN = 0.25

_NOISE, _LOW, _HIGH = range(3)


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    shape: tuple
    seed: int = 0
    amplitude: float = 1.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 4:
            raise ValueError(f"shape must be NCHW, got {shape}")
        for name, s in zip(AXES, shape):
            if s < 1:
                raise ValueError(f"axis {name} has size {s}; all axes must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        object.__setattr__(self, "shape", shape)


class _Stream:
    def __init__(self, seed: int, stream: int, member: int = 0):
        self._bits = np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, member)))

    def uniform(self, size) -> np.ndarray:
        """Doubles in ``[0, 1)``."""
        raw = self._bits.random_raw(size)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def integers(self, lo: int, hi: int, size) -> np.ndarray:
        """Integers in ``[lo, hi]`` (modulo reduction; bias is irrelevant here)."""
        raw = self._bits.random_raw(size)
        return lo + (raw % np.uint64(hi - lo + 1)).astype(np.int64)


def _sinusoids(stream: _Stream, shape, freq_lo: int, freq_hi: int) -> np.ndarray:
    """Per (n, c): sum of TERMS sinusoids with integer cycle counts in [freq_lo, freq_hi].

    Each term has amplitude in [0.5, 1] / TERMS, so |result| <= 1.
    """
    n, c, h, w = shape
    k = n * c * TERMS
    fx = stream.integers(freq_lo, freq_hi, k).reshape(n, c, TERMS)
    fy = stream.integers(freq_lo, freq_hi, k).reshape(n, c, TERMS)
    if freq_lo == 0:
        # A (0, 0) term would be a constant offset, not structure.
        fx = np.where((fx == 0) & (fy == 0), 1, fx)
    phase = 2 * np.pi * stream.uniform(k).reshape(n, c, TERMS)
    amp = (0.5 + 0.5 * stream.uniform(k).reshape(n, c, TERMS)) / TERMS

    ys = np.arange(h, dtype=np.float64)[:, None] / h
    xs = np.arange(w, dtype=np.float64)[None, :] / w
    out = np.zeros(shape, dtype=np.float64)
    for t in range(TERMS):
        arg = (2 * np.pi * (fx[..., t, None, None] * xs + fy[..., t, None, None] * ys)
               + phase[..., t, None, None])
        out += amp[..., t, None, None] * np.sin(arg)
    return out


def _high_band(shape):
    w = max(shape[2], shape[3])
    lo = max(4, w // 8)
    return lo, max(lo, w // 4)


def _lowfreq(spec: SynthSpec, member: int = 0) -> np.ndarray:
    return _sinusoids(_Stream(spec.seed, _LOW, member), spec.shape, 0, 3)


def _detail(spec: SynthSpec, member: int = 0) -> np.ndarray:
    return _sinusoids(_Stream(spec.seed, _HIGH, member), spec.shape, *_high_band(spec.shape))


def _generate64(spec: SynthSpec, member: int = 0) -> np.ndarray:
    a = spec.amplitude
    if spec.kind == "noise":
        u = _Stream(spec.seed, _NOISE, member).uniform(int(np.prod(spec.shape)))
        return a * (2 * u.reshape(spec.shape) - 1)
    if spec.kind == "highfreq":
        return a * (_lowfreq(spec, member) + HIGHFREQ_GAIN * _detail(spec, member))
    return a * _lowfreq(spec, member)


def generate(spec: SynthSpec) -> np.ndarray:
    """One latent.  For ``structured-pair`` this is the base member."""
    return as_tensor(_generate64(spec), dtype=spec.dtype)


def generate_pair(spec: SynthSpec):
    """``(base, refined)`` latents.

    ``structured-pair`` returns a low-frequency base and the same base plus a
    high-frequency detail term.  Other kinds return two draws from disjoint
    streams of the same seed.
    """
    if spec.kind == "structured-pair":
        base = spec.amplitude * _lowfreq(spec)
        refined = base + spec.amplitude * DETAIL_GAIN * _detail(spec)
        return as_tensor(base, dtype=spec.dtype), as_tensor(refined, dtype=spec.dtype)
    return generate(spec), as_tensor(_generate64(spec, member=1), dtype=spec.dtype)
