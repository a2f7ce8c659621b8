"""
Checking backward passes against finite differences
===================================================

Every input and parameter gradient is compared with a central difference of
``sum(fused * probe)`` in float64.
"""

from latfuse import check_module
from latfuse.fusion import fusion_backward

for method, k in (("agf", 1), ("agf", 7), ("dsf", None)):
    report = check_module(method, (1, 2, 5, 5), seed=1, kernel_size=k)
    print(f"{method} k={k}: max_rel={report.max_rel:.2e} passed={report.passed}")


# A deliberately wrong weight gradient is caught and located.
def broken(m, base, refined, g):
    grads = fusion_backward(m, base, refined, g)
    w = grads.weights.copy()
    w[0, 1, 0, 0] += 1e-3
    return grads._replace(weights=w)


report = check_module("agf", (1, 2, 5, 5), seed=1, backward=broken)
print("corrupted:", report.passed, "worst entry:", report.worst)
