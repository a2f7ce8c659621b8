"""
Latents on disk
===============

Files are NPY v1.0, readable by ``numpy.load``. Lower-rank arrays are read as
NCHW by prepending unit axes.
"""

import tempfile
from pathlib import Path

import numpy as np

from latfuse import read_latent, write_latent
from latfuse.npyio import NpyFormatError

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "latent.npy"
    x = np.random.default_rng(2).standard_normal((4, 128, 128)).astype(np.float32)
    write_latent(x, path)
    print("size on disk:", path.stat().st_size, "bytes")
    print("read back as:", read_latent(path).shape)
    print("numpy agrees:", np.array_equal(np.load(path), x))

    # Half precision is outside the supported subset.
    np.save(path, x.astype(np.float16))
    try:
        read_latent(path)
    except NpyFormatError as e:
        print(type(e).__name__, "-", e)
