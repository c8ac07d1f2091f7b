"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--rows 2000000] [--dim 96] [--repeat 5]

These routines are the inner loops of embedding-gradient accumulation
and neighbourhood aggregation; the numpy fallback leans on np.add.at /
np.maximum.at, which are correct but slow on duplicate-heavy indices.
"""

import argparse
import time

import numpy as np

from discog.kernels import pykernels

try:
    from discog.kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=2_000_000)
    parser.add_argument("--dim", type=int, default=96)
    parser.add_argument("--segments", type=int, default=100_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = np.ascontiguousarray(rng.normal(size=(args.rows, args.dim)))
    ids = np.ascontiguousarray(rng.integers(0, args.segments, size=args.rows))
    values = np.ascontiguousarray(rows[:, 0])

    cases = {
        "scatter_add_rows": lambda impl: impl.scatter_add_rows(
            np.zeros((args.segments, args.dim)), ids, rows
        ),
        "segment_sum_rows": lambda impl: impl.segment_sum_rows(ids, rows, args.segments),
        "segment_sum_scalars": lambda impl: impl.segment_sum_scalars(ids, values, args.segments),
        "segment_max_scalars": lambda impl: impl.segment_max_scalars(ids, values, args.segments, -np.inf),
    }

    print(f"rows={args.rows} dim={args.dim} segments={args.segments} (best of {args.repeat})")
    header = f"{'kernel':<22} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, case in cases.items():
        py_time = timeit(lambda: case(pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<22} {py_time * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>8}")
            continue
        c_time = timeit(lambda: case(_ckernels), args.repeat)
        check_py = case(pykernels)
        check_c = case(_ckernels)
        assert np.asarray(check_py).tobytes() == np.asarray(check_c).tobytes(), f"{name} backends disagree"
        print(f"{name:<22} {py_time * 1e3:>8.1f}ms {c_time * 1e3:>8.1f}ms {py_time / c_time:>7.1f}x")
    if _ckernels is None:
        print("compiled extension not built; install with a C compiler to compare")


if __name__ == "__main__":
    main()
