#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Covers the two hot inner loops the extension accelerates: exact kd-tree NN
queries (training-set labeling) and marching-cubes cell emission. Results
are verified bit-identical between backends before timing.

Usage: python benchmarks/bench_kernels.py [--nn-points N] [--nn-queries M]
"""
import argparse
import time

import numpy as np

from soupfields import _kernels
from soupfields._kernels import fallback
from soupfields._mc_tables import EDGE_TABLE, TRI_TABLE
from soupfields.field import SplitSphereField
from soupfields.geometry import NnIndex
from soupfields.mesher import extract_grid


def timeit(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_nn(n_points, n_queries):
    rng = np.random.default_rng(0)
    pts = rng.random((n_points, 3))
    queries = rng.random((n_queries, 3))
    index = NnIndex(pts)
    args = (index.points, index._perm, index._axis, index._split,
            index._left, index._right, index._start, index._end, queries)

    def run(kernel):
        idx = np.empty(n_queries, dtype=np.int64)
        d2 = np.empty(n_queries)
        kernel(*args, idx, d2)
        return idx, d2

    i1, d1 = run(fallback.kdtree_query)
    results = {"fallback": timeit(lambda: run(fallback.kdtree_query))}
    if _kernels.HAVE_COMPILED:
        i2, d2 = run(_kernels._core.kdtree_query)
        assert (i1 == i2).all() and (d1 == d2).all(), "backend mismatch"
        results["compiled"] = timeit(lambda: run(_kernels._core.kdtree_query))
    return results


def bench_mc(initial_res=16, levels=2):
    grid = extract_grid(SplitSphereField((0, 0, 0), 0.4, 0.1), initial_res, levels)
    args = (np.ascontiguousarray(grid.voxels), np.ascontiguousarray(grid.corner_values),
            grid.h / 2, float(grid.origin[0]), float(grid.origin[1]),
            float(grid.origin[2]), grid.h, grid.lattice_corners,
            grid.lattice_corners, EDGE_TABLE, TRI_TABLE)
    k1, p1 = fallback.mc_cells(*args)
    results = {"fallback": timeit(lambda: fallback.mc_cells(*args))}
    if _kernels.HAVE_COMPILED:
        k2, p2 = _kernels._core.mc_cells(*args)
        assert (k1 == k2).all() and (p1 == p2).all(), "backend mismatch"
        results["compiled"] = timeit(lambda: _kernels._core.mc_cells(*args))
    return results, len(grid.voxels), len(k1) // 3


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nn-points", type=int, default=50000)
    parser.add_argument("--nn-queries", type=int, default=20000)
    args = parser.parse_args()

    print(f"active backend: {_kernels.BACKEND}")
    if not _kernels.HAVE_COMPILED:
        print("compiled extension not built; showing fallback timings only")

    print(f"\nkd-tree exact NN: {args.nn_points} points, {args.nn_queries} queries")
    rows = bench_nn(args.nn_points, args.nn_queries)
    for name, secs in rows.items():
        print(f"  {name:9s} {secs * 1e3:9.1f} ms   "
              f"({args.nn_queries / secs / 1e3:8.1f} kqueries/s)")
    if len(rows) == 2:
        print(f"  speedup   {rows['fallback'] / rows['compiled']:9.1f}x")

    rows, n_cells, n_tris = bench_mc()
    print(f"\nmarching cubes: {n_cells} cells -> {n_tris} triangles")
    for name, secs in rows.items():
        print(f"  {name:9s} {secs * 1e3:9.1f} ms   ({n_cells / secs / 1e3:8.1f} kcells/s)")
    if len(rows) == 2:
        print(f"  speedup   {rows['fallback'] / rows['compiled']:9.1f}x")


if __name__ == "__main__":
    main()
