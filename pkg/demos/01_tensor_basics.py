"""
Channel operations on NCHW tensors
==================================

Tensors are plain numpy arrays with four axes. The helpers here check shapes
and dtypes and never modify their inputs.
"""

import numpy as np

from latfuse import (
    avg_pool_channels,
    broadcast_mul,
    concat_channels,
    max_pool_channels,
    sigmoid,
    softmax_channels,
)

rng = np.random.default_rng(0)
a = rng.standard_normal((1, 4, 3, 3)).astype(np.float32)
b = rng.standard_normal((1, 4, 3, 3)).astype(np.float32)

# Concatenating along channels stacks a first, then b.
ab = concat_channels(a, b)
print("concat:", ab.shape)

# Pools collapse the channel axis to one map per pixel.
print("mean map:\n", avg_pool_channels(a)[0, 0])
print("max map:\n", max_pool_channels(a)[0, 0])

# A softmax over two logit channels gives weights that sum to one.
w = softmax_channels(ab[:, :2])
print("weights sum to one:", np.allclose(w.sum(axis=1), 1))

# A single-channel gate is repeated across every channel it multiplies.
gate = sigmoid(avg_pool_channels(a))
print("gated:", broadcast_mul(gate, b).shape)
