"""``latfuse`` command line.

Subcommands: ``gen-latent``, ``fuse``, ``stats``, ``gradcheck``, ``bench``.
Output is line-oriented ``key=value``.

Exit codes:
    0  success
    1  a check failed (gradient check, non-finite values in ``stats``)
    2  usage error (bad flags or flag values)
    3  data error (unreadable file, shape mismatch, bad manifest)
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import npyio
from .conv import Conv2dParams, conv2d, macs, set_threads
from .fusion import fusion_forward, init_params, load_params
from .gradcheck import TieError, check_module
from .synth import KINDS, SynthSpec, generate, generate_pair
from .tensor import ShapeError

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

DTYPES = {"f32": "float32", "f64": "float64"}


class DataError(Exception):
    pass


def parse_shape(text: str) -> tuple:
    parts = text.lower().split("x")
    try:
        shape = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like NxCxHxW, got {text!r}") from None
    if len(shape) != 4 or min(shape) < 1:
        raise argparse.ArgumentTypeError(f"shape must be four positive sizes NxCxHxW, got {text!r}")
    return shape


def parse_init(text: str):
    """``zeros`` or ``uniform:SCALE:SEED``."""
    if text == "zeros":
        return {"init": "zeros"}
    parts = text.split(":")
    if len(parts) == 3 and parts[0] == "uniform":
        try:
            scale, seed = float(parts[1]), int(parts[2])
        except ValueError:
            pass
        else:
            if scale >= 0 and seed >= 0:
                return {"init": "uniform", "scale": scale, "seed": seed}
    raise argparse.ArgumentTypeError(f"--init must be 'zeros' or 'uniform:SCALE:SEED', got {text!r}")


def _fmt(v) -> str:
    return f"{v:.9g}"


def _shape_str(shape) -> str:
    return "x".join(map(str, shape))


def stats_lines(t: np.ndarray, prefix: str = "") -> list[str]:
    """Shape, dtype, per-channel min/max/mean/std over finite values, non-finite count."""
    t4 = t.reshape((1,) * (4 - t.ndim) + t.shape)
    lines = [f"{prefix}shape={_shape_str(t.shape)}", f"{prefix}dtype={t.dtype}"]
    for c in range(t4.shape[1]):
        ch = t4[:, c].astype(np.float64).ravel()
        ch = ch[np.isfinite(ch)]
        if ch.size:
            vals = (ch.min(), ch.max(), ch.mean(), ch.std())
        else:
            vals = (np.nan,) * 4
        lines.append(
            f"{prefix}channel{c}.min={_fmt(vals[0])} {prefix}channel{c}.max={_fmt(vals[1])} "
            f"{prefix}channel{c}.mean={_fmt(vals[2])} {prefix}channel{c}.std={_fmt(vals[3])}"
        )
    lines.append(f"{prefix}nonfinite={int((~np.isfinite(t)).sum())}")
    return lines


def checksum(t: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(t).tobytes()).hexdigest()[:16]


def _emit(lines):
    for line in lines:
        print(line)


def _pair_paths(out: Path):
    stem = out.name[:-4] if out.name.endswith(".npy") else out.name
    return out.with_name(f"{stem}_base.npy"), out.with_name(f"{stem}_refined.npy")


def cmd_gen_latent(args) -> int:
    spec = SynthSpec(args.kind, args.shape, args.seed, args.amplitude, DTYPES[args.dtype])
    out = Path(args.out)
    if args.kind == "structured-pair":
        outputs = zip(("base", "refined"), _pair_paths(out), generate_pair(spec))
    else:
        outputs = [("latent", out, generate(spec))]
    for role, path, t in outputs:
        npyio.write_latent(t, path)
        _emit([f"{role}.file={path}"] + stats_lines(t, f"{role}."))
    return EXIT_OK


def _load_module(args, channels: int):
    if args.weights:
        m = load_params(args.weights)
        if m.method != args.method:
            raise DataError(f"manifest is for {m.method!r}, --method is {args.method!r}")
        if args.method == "agf" and args.k_agf is not None and args.k_agf != m.kernel_size:
            raise DataError(f"manifest kernel_size {m.kernel_size} != --k-agf {args.k_agf}")
        return m
    k = args.k_agf if args.method == "agf" else None
    return init_params(args.method, channels, k, **args.init)


def cmd_fuse(args) -> int:
    base = npyio.read_latent(args.base)
    refined = npyio.read_latent(args.refined)
    if base.shape != refined.shape:
        raise DataError(f"base shape {base.shape} != refined shape {refined.shape}")
    if base.dtype != refined.dtype:
        raise DataError(f"base dtype {base.dtype} != refined dtype {refined.dtype}")
    m = _load_module(args, base.shape[1])
    result = fusion_forward(m, base, refined, impl=args.impl)
    npyio.write_latent(result.fused, args.out)
    lines = [f"method={m.method}", f"kernel_size={m.kernel_size}", f"fused.file={args.out}"]
    if args.maps_out:
        npyio.write_latent(result.maps, args.maps_out)
        lines.append(f"maps.file={args.maps_out}")
    _emit(lines + stats_lines(result.fused, "fused."))
    return EXIT_OK


def cmd_stats(args) -> int:
    t = npyio.read_array(args.input)
    lines = stats_lines(t)
    _emit(lines)
    return EXIT_CHECK if int(lines[-1].split("=")[1]) else EXIT_OK


def cmd_gradcheck(args) -> int:
    k = args.k_agf if args.method == "agf" else None
    try:
        report = check_module(args.method, args.shape, args.seed, args.eps, args.threshold,
                              kernel_size=k, init=args.init)
    except TieError as e:
        print(f"error={e}", file=sys.stderr)
        return EXIT_CHECK
    _emit([f"method={args.method}", f"shape={_shape_str(args.shape)}", f"seed={args.seed}"]
          + report.lines())
    return EXIT_OK if report.passed else EXIT_CHECK


def _bench_case(op: str, shape, seed: int, k_agf: int):
    """Returns ``(run(impl) -> output, mac count, bias additions)``.

    conv7x7 is shaped like the spatial-attention conv (C -> 1), conv1x1 like
    the AGF logit conv (C -> 2); agf/dsf take ``shape`` as the latent shape.
    """
    n, c, h, w = shape
    if op in ("conv1x1", "conv7x7"):
        k, out_c = (1, 2) if op == "conv1x1" else (7, 1)
        rng = np.random.Generator(np.random.PCG64(seed))
        x = rng.uniform(-1, 1, shape).astype(np.float32)
        p = Conv2dParams(
            rng.uniform(-0.1, 0.1, (out_c, c, k, k)).astype(np.float32),
            rng.uniform(-0.1, 0.1, out_c).astype(np.float32),
        )
        return (lambda impl: conv2d(x, p, impl)), macs(shape, p), n * h * w * out_c
    base, refined = generate_pair(SynthSpec("structured-pair", shape, seed))
    m = init_params(op, c, k_agf if op == "agf" else None, init="uniform", scale=0.1, seed=seed)
    feat_shape = (n, 2 * c if op == "agf" else 2, h, w)
    return ((lambda impl: fusion_forward(m, base, refined, impl).fused),
            macs(feat_shape, m.conv), n * h * w * m.conv.out_channels)


def cmd_bench(args) -> int:
    run, n_macs, bias_adds = _bench_case(args.op, args.shape, args.seed, args.k_agf or 1)
    out = run(args.impl)  # warm-up; includes JIT compilation
    start = time.perf_counter()
    for _ in range(args.iters):
        out = run(args.impl)
    per_iter = (time.perf_counter() - start) / args.iters
    _emit([
        f"op={args.op}",
        f"impl={args.impl}",
        f"shape={_shape_str(args.shape)}",
        f"iters={args.iters}",
        f"seconds_per_iter={per_iter:.6e}",
        f"macs={n_macs}",
        f"bias_adds={bias_adds}",
        f"gmacs_per_s={n_macs / per_iter / 1e9:.6f}",
        f"checksum={checksum(out)}",
        f"checksum_sum={_fmt(float(out.astype(np.float64).sum()))}",
    ])
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a subcommand's default cannot clobber a value given before it.
    common.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS,
                        help="worker cap for the fast kernels (default: $LATFUSE_THREADS or all)")

    parser = argparse.ArgumentParser(prog="latfuse", description=__doc__.split("\n")[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-latent", parents=[common], help="write a synthetic latent (or pair)")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--shape", type=parse_shape, required=True, help="NxCxHxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--dtype", choices=sorted(DTYPES), default="f32")
    p.add_argument("--out", required=True,
                   help="output .npy; structured-pair writes <stem>_base.npy and <stem>_refined.npy")
    p.set_defaults(func=cmd_gen_latent)

    p = sub.add_parser("fuse", parents=[common], help="fuse a base/refined latent pair")
    p.add_argument("--method", choices=("agf", "dsf"), required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--refined", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--maps-out", help="also write the attention maps")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--init", type=parse_init, help="zeros | uniform:SCALE:SEED")
    src.add_argument("--weights", help="weights manifest JSON")
    p.add_argument("--k-agf", type=int, choices=(1, 7), default=None,
                   help="AGF attention kernel size (default 1)")
    p.add_argument("--impl", choices=("fast", "naive"), default="fast")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("stats", parents=[common], help="summarise an NPY file")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--method", choices=("agf", "dsf"), required=True)
    p.add_argument("--shape", type=parse_shape, default=(1, 2, 5, 5))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--eps", type=_positive_float, default=1e-5)
    p.add_argument("--threshold", type=_positive_float, default=1e-6)
    p.add_argument("--k-agf", type=int, choices=(1, 7), default=None)
    p.add_argument("--init", choices=("uniform", "zeros"), default="uniform")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", parents=[common], help="time a kernel or fusion module")
    p.add_argument("--op", choices=("conv1x1", "conv7x7", "agf", "dsf"), required=True)
    p.add_argument("--shape", type=parse_shape, default=(1, 8, 128, 128))
    p.add_argument("--iters", type=_positive_int, default=10)
    p.add_argument("--impl", choices=("fast", "naive"), default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-agf", type=int, choices=(1, 7), default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        set_threads(getattr(args, "threads", None))
    except ValueError as e:
        print(f"error={e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, ShapeError, npyio.NpyFormatError, OSError, ValueError, TypeError) as e:
        print(f"error={e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
