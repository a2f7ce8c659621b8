"""
Timing the convolution kernels
==============================

Runs the ``bench`` subcommand for both kernels and prints throughput. The
checksums must agree; the first call compiles and is not timed.
"""

from latfuse.cli import main

for impl in ("naive", "fast"):
    main(["bench", "--op", "conv7x7", "--shape", "1x8x128x128", "--iters", "5", "--impl", impl])
