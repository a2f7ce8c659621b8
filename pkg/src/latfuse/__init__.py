"""Dual-latent fusion of base and refined diffusion latents.

Two fusers are provided: adaptive global fusion (channel-softmax weights from
a convolution over the concatenated latents) and dynamic spatial fusion (a
sigmoid gate from a 7x7 convolution over channel-pooled features).
"""

from .conv import Conv2dParams, conv2d, conv2d_backward, conv2d_fast, conv2d_naive, set_threads
from .fusion import (
    AgfModule,
    DsfModule,
    FusionGrads,
    FusionOutput,
    agf_backward,
    agf_forward,
    dsf_backward,
    dsf_forward,
    fusion_backward,
    fusion_forward,
    init_params,
    load_params,
    save_params,
)
from .gradcheck import GradCheckReport, check_gradients, check_module, finite_diff
from .npyio import read_array, read_latent, write_latent
from .synth import SynthSpec, generate, generate_pair
from .tensor import (
    ShapeError,
    as_tensor,
    avg_pool_channels,
    broadcast_mul,
    concat_channels,
    elementwise,
    max_pool_channels,
    sigmoid,
    softmax_channels,
    split_channels,
)

__version__ = "0.1.0"
