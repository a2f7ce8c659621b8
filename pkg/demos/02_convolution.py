"""
Two convolution kernels, one answer
===================================

``conv2d_naive`` is a plain loop nest; ``conv2d_fast`` pads once and runs rows
in parallel. Both add the products in the same order, so their outputs match
bit for bit.
"""

import numpy as np

from latfuse import Conv2dParams, conv2d_fast, conv2d_naive

rng = np.random.default_rng(1)
x = rng.uniform(-1, 1, (1, 8, 64, 64)).astype(np.float32)
p = Conv2dParams(rng.uniform(-0.1, 0.1, (1, 8, 7, 7)).astype(np.float32),
                 np.zeros(1, np.float32))

slow = conv2d_naive(x, p)
fast = conv2d_fast(x, p)
print("output shape:", fast.shape)
print("bit-identical:", slow.tobytes() == fast.tobytes())

# A kernel with a single 1 at the centre copies its input channel.
delta = np.zeros((1, 1, 7, 7), np.float32)
delta[0, 0, 3, 3] = 1
copy = conv2d_fast(x[:, :1], Conv2dParams(delta, np.zeros(1, np.float32)))
print("centre delta is identity:", np.array_equal(copy, x[:, :1]))
