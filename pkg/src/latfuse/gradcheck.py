"""Central finite-difference checks for the fusion backward passes.

Everything runs in float64.  The scalar probed is ``sum(fused * R)`` for a
seeded random ``R``, so the analytic side is the module backward evaluated
at ``grad_fused = R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv import Conv2dParams
from .fusion import fusion_backward, fusion_forward, init_params

MAX_ELEMENTS = 4096
JITTER = 1e-3


class TieError(RuntimeError):
    """Max-pool inputs still tie after re-jittering."""


@dataclass(frozen=True)
class TensorCheck:
    max_rel: float
    max_abs: float
    worst_index: tuple


@dataclass
class GradCheckReport:
    threshold: float
    eps: float
    floor: float
    checks: dict = field(default_factory=dict)
    rejittered: bool = False

    @property
    def max_rel(self) -> float:
        return max((c.max_rel for c in self.checks.values()), default=0.0)

    @property
    def max_abs(self) -> float:
        return max((c.max_abs for c in self.checks.values()), default=0.0)

    @property
    def worst(self) -> tuple[str, tuple]:
        name = max(self.checks, key=lambda k: self.checks[k].max_rel)
        return name, self.checks[name].worst_index

    @property
    def passed(self) -> bool:
        return self.max_rel <= self.threshold

    def lines(self) -> list[str]:
        out = []
        for name, c in self.checks.items():
            idx = ",".join(map(str, c.worst_index))
            out.append(f"{name}.max_rel={c.max_rel:.3e} {name}.max_abs={c.max_abs:.3e} {name}.worst=({idx})")
        name, idx = self.worst
        out += [
            f"eps={self.eps:g}",
            f"threshold={self.threshold:g}",
            f"rel_floor={self.floor:g}",
            f"rejittered={str(self.rejittered).lower()}",
            f"max_rel={self.max_rel:.3e}",
            f"max_abs={self.max_abs:.3e}",
            f"worst={name}[{','.join(map(str, idx))}]",
            f"result={'pass' if self.passed else 'fail'}",
        ]
        return out

    def __str__(self):
        return "\n".join(self.lines())


def finite_diff(f, x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place one element at a time and restored exactly.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x)
    if x.dtype != np.float64:
        raise TypeError(f"finite differences need float64 input, got {x.dtype}")
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError(
                f"non-finite evaluation at index {np.unravel_index(i, x.shape)}: f+={hi}, f-={lo}"
            )
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def compare(analytic, numeric, floor: float = 0.0) -> TensorCheck:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``, summarised by its maximum.

    Entries where both sides are exactly zero count as zero error.
    """
    a, n = np.asarray(analytic, np.float64), np.asarray(numeric, np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {n.shape}")
    diff = np.abs(a - n)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    rel = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    i = int(np.argmax(rel))
    idx = tuple(int(j) for j in np.unravel_index(i, a.shape))
    return TensorCheck(float(rel.reshape(-1)[i]), float(diff.max()), idx)


def check_gradients(f, inputs: dict, analytic: dict, eps=1e-5, threshold=1e-6, floor=0.0):
    """Compare ``analytic[name]`` with finite differences of ``f(**inputs)`` per input."""
    report = GradCheckReport(threshold=threshold, eps=eps, floor=floor)
    for name, x in inputs.items():
        if x.size > MAX_ELEMENTS:
            raise ValueError(f"{name} has {x.size} elements; cap is {MAX_ELEMENTS}")

        def f_one(xi, name=name):
            return f(**{**inputs, name: xi})

        numeric = finite_diff(f_one, x.copy(), eps)
        report.checks[name] = compare(analytic[name], numeric, floor)
    return report


def _has_tie(x, margin):
    """True if the top two channel values at some pixel are within ``margin``."""
    if x.shape[1] < 2:
        return False
    top2 = np.sort(x, axis=1)[:, -2:]
    return bool((top2[:, 1] - top2[:, 0] <= margin).any())


def check_module(method: str, shape, seed: int = 0, eps: float = 1e-5,
                 threshold: float = 1e-6, kernel_size: int | None = None,
                 init: str = "uniform", scale: float = 0.5, floor: float = 1e-3,
                 backward=None) -> GradCheckReport:
    """Exhaustively check every input and parameter gradient of an AGF or DSF module.

    ``backward`` replaces :func:`fusion_backward` (used for fault injection).
    Max-pool ties in the DSF base latent (top-two gap within ``2 * eps``) are
    broken by one seeded jitter of ``1e-3``; a tie that survives raises
    :class:`TieError`.
    """
    shape = tuple(shape)
    n_elem = int(np.prod(shape))
    if n_elem > MAX_ELEMENTS:
        raise ValueError(f"shape {shape} has {n_elem} elements; cap is {MAX_ELEMENTS}")
    backward = backward or fusion_backward
    rng = np.random.Generator(np.random.PCG64(seed))
    base = rng.uniform(-1, 1, shape)
    refined = rng.uniform(-1, 1, shape)
    probe = rng.uniform(-1, 1, shape)
    module = init_params(method, shape[1], kernel_size, init=init, scale=scale,
                         seed=seed, dtype=np.float64)

    rejittered = False
    if method == "dsf" and _has_tie(base, 2 * eps):
        base = base + JITTER * rng.standard_normal(shape)
        rejittered = True
        if _has_tie(base, 2 * eps):
            raise TieError("max-pool tie persists after re-jitter")

    def objective(base, refined, weights, bias):
        m = module.replace_conv(Conv2dParams(weights, bias))
        return float((fusion_forward(m, base, refined).fused * probe).sum())

    grads = backward(module, base, refined, probe)
    inputs = {
        "base": base,
        "refined": refined,
        "weights": module.conv.weights.copy(),
        "bias": module.conv.bias.copy(),
    }
    analytic = {"base": grads.base, "refined": grads.refined,
                "weights": grads.weights, "bias": grads.bias}
    report = check_gradients(objective, inputs, analytic, eps, threshold, floor)
    report.rejittered = rejittered
    return report
