"""
Fusing a base and a refined latent
==================================

Global fusion learns a per-pixel softmax over the two sources; spatial fusion
gates between them with a single sigmoid map built from channel pools.
"""

import numpy as np

from latfuse import SynthSpec, agf_forward, dsf_forward, generate_pair, init_params

base, refined = generate_pair(SynthSpec("structured-pair", (1, 4, 32, 32), seed=42))

# Zero parameters split evenly: both methods return the plain mean.
for method, forward in (("agf", agf_forward), ("dsf", dsf_forward)):
    out = forward(init_params(method, 4), base, refined)
    print(method, "zeros init, max |fused - mean| =",
          np.abs(out.fused - (base + refined) / 2).max())

# Seeded weights give different blends, each bounded by the two inputs.
agf = agf_forward(init_params("agf", 4, 7, init="uniform", scale=0.5, seed=7), base, refined)
dsf = dsf_forward(init_params("dsf", 4, init="uniform", scale=0.5, seed=7), base, refined)
lo, hi = np.minimum(base, refined), np.maximum(base, refined)
for name, out in (("agf", agf), ("dsf", dsf)):
    inside = ((out.fused >= lo - 1e-6) & (out.fused <= hi + 1e-6)).all()
    print(name, "maps", out.maps.shape, "within bounds:", inside)
print("agf weight on refined, mean:", agf.maps[:, 1].mean())
print("dsf gate, mean:", dsf.maps.mean())
