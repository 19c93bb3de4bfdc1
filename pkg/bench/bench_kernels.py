#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot paths on sizes typical of convergence studies: span
lookup plus the nonzero-basis triangle, single-function evaluation from a
local knot vector, and tensor-product spline evaluation in 1d/2d/3d.

Run from the repository root:

    python bench/bench_kernels.py [--points N] [--repeats K]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hiersplines import kernels  # noqa: E402
from hiersplines.tensor import TensorSplineEvaluator, build_level_sequence  # noqa: E402
from hiersplines.univariate import uniform_open_knot_vector  # noqa: E402


def timeit(fn, repeats):
    fn()  # warmup / JIT
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(points, repeats):
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    xs = rng.random(points)
    kv = uniform_open_knot_vector(3, 512)
    knots = kv.floats()
    tau = knots[kv.num_basis // 2:kv.num_basis // 2 + 5]

    cases = {}
    cases["find_spans + basis_columns (p=3, 512 cells)"] = {
        name: (lambda impl=impl: impl.basis_columns(
            knots, 3, xs, impl.find_spans(knots, 3, xs)))
        for name, impl in backends.items()}
    cases["local_values (p=3)"] = {
        name: (lambda impl=impl: impl.local_values(tau, 3, xs, 1.0))
        for name, impl in backends.items()}

    for dim, intervals in ((1, 4096), (2, 64), (3, 16)):
        levels = build_level_sequence(
            [uniform_open_knot_vector(2, intervals)] * dim, 1)
        ev = TensorSplineEvaluator(levels[0])
        coeffs = rng.random(ev.size)
        pts = rng.random((points, dim))
        cases[f"tensor_spline_values (d={dim}, p=2, {intervals}^d cells)"] = {
            name: (lambda impl=impl, ev=ev, coeffs=coeffs, pts=pts:
                   impl.tensor_spline_values(
                       coeffs, ev.knots_flat, ev.knot_offsets, ev.degrees,
                       ev.strides, ev.offsets_table, pts))
            for name, impl in backends.items()}

    width = max(len(k) for k in cases)
    names = list(backends)
    header = f"{'case':<{width}}  " + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(f"backend={kernels.BACKEND}  points={points}  repeats={repeats}")
    print(header)
    print("-" * len(header))
    for case, runs in cases.items():
        times = [timeit(runs[n], repeats) for n in names]
        line = f"{case:<{width}}  " + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if "numba" in names and "numpy" in names:
            ratio = times[names.index("numpy")] / times[names.index("numba")]
            line += f"{ratio:>9.1f}x"
        print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    bench(args.points, args.repeats)


if __name__ == "__main__":
    main()
