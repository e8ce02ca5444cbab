"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best-of-N time for each backend and the
speed-up, and checks that both backends agree on every output.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from gafnirs import _fallback
from gafnirs.preprocess import FilterSpec, butterworth_coefficients, sos_initial_state

try:
    from gafnirs import _core
except ImportError:  # pragma: no cover
    _core = None


def cases(rng: np.random.Generator) -> dict:
    x = rng.normal(size=(16, 8, 32, 32))
    cols = _fallback.im2col(x, 3, 3, 1, 1)
    pooled, idx = _fallback.maxpool_forward(x, 2, 2)
    sos = butterworth_coefficients(FilterSpec(), 13.3)
    sig = rng.normal(size=(32, 4000))
    zi = sos_initial_state(sos)[:, None, :] * sig[None, :, :1]
    return {
        "im2col 16x8x32x32 k3": lambda m: m.im2col(x, 3, 3, 1, 1),
        "col2im 16x8x32x32 k3": lambda m: m.col2im(cols, x.shape, 3, 3, 1, 1),
        "maxpool fwd 2x2": lambda m: m.maxpool_forward(x, 2, 2),
        "maxpool bwd 2x2": lambda m: m.maxpool_backward(pooled, idx, x.shape),
        "sosfilt 32x4000": lambda m: m.sosfilt(sos, sig, zi.copy()),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-12)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=10)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy ms':>12}{'cython ms':>12}{'speed-up':>10}  agree")
    for name, fn in cases(rng).items():
        times = {}
        for label, mod in (("numpy", _fallback), ("cython", _core)):
            t = timeit.repeat(lambda: fn(mod), repeat=args.repeat, number=args.number)
            times[label] = min(t) / args.number * 1e3
        agree = _same(fn(_fallback), fn(_core))
        print(f"{name:<24}{times['numpy']:>12.3f}{times['cython']:>12.3f}"
              f"{times['numpy'] / times['cython']:>9.1f}x  {'yes' if agree else 'NO'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
