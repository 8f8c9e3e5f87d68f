"""Compare the compiled and pure-Python enumeration kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 8,10,12,14] [--repeat 3]
"""

import argparse
import time

import numpy as np

from moxi import _kernels_py
from moxi.shapley import deletion_weights, shapley_weights

try:
    from moxi import _kernels_cy
except ImportError:
    _kernels_cy = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(m, table):
    sw, dw = shapley_weights(m - 1), deletion_weights(m)
    full = (1 << m) - 1
    return {
        "all_shapley": lambda k: k.all_shapley(table, m, sw),
        "block_marginal_sum": lambda k: k.block_marginal_sum(table, full & ~1, 1, sw),
        "deletion_marginal_sum": lambda k: k.deletion_marginal_sum(table, full, 0, dw),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="8,10,12,14")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels_cy is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.Generator(np.random.PCG64(0))
    print(f"{'kernel':<22} {'m':>3} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for m in (int(s) for s in args.sizes.split(",")):
        table = rng.normal(size=1 << m)
        for name, call in cases(m, table).items():
            tp, vp = best_of(lambda: call(_kernels_py), args.repeat)
            tc, vc = best_of(lambda: call(_kernels_cy), args.repeat)
            assert np.allclose(vp, vc, atol=1e-10), name
            print(f"{name:<22} {m:>3} {tp:>10.5f} {tc:>10.5f} {tp / max(tc, 1e-9):>7.0f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
