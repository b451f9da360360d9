"""Compiled vs numpy pair-distance sums (the Morawetz double sum).

    python3 benchmarks/bench_core.py [--sizes 256 1024 4096] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from bosepair import _core_py

try:
    from bosepair import _core
except ImportError:
    _core = None


def case(npts, dim, rng):
    box = 40.0
    coords = np.ascontiguousarray(rng.uniform(-box / 2, box / 2, size=(npts, dim)))
    a = rng.standard_normal(npts)
    b = rng.standard_normal(npts)
    return a, b, coords, box


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'points':>8} {'numpy [s]':>12} {'cython [s]':>12} {'speedup':>8} {'rel diff':>10}")
    for npts in args.sizes:
        a, b, coords, box = case(npts, args.dim, rng)
        t_py = min(timeit.repeat(lambda: _core_py.pair_distance_sum(a, b, coords, box),
                                 number=1, repeat=args.repeat))
        ref = _core_py.pair_distance_sum(a, b, coords, box)
        if _core is None:
            print(f"{npts:>8} {t_py:>12.4g} {'n/a':>12}")
            continue
        t_cy = min(timeit.repeat(lambda: _core.pair_distance_sum(a, b, coords, box),
                                 number=1, repeat=args.repeat))
        val = _core.pair_distance_sum(a, b, coords, box)
        rel = abs(val - ref) / max(abs(ref), 1e-300)
        print(f"{npts:>8} {t_py:>12.4g} {t_cy:>12.4g} {t_py / t_cy:>8.2f} {rel:>10.2e}")


if __name__ == "__main__":
    main()
