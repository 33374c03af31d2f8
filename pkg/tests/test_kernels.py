"""Compiled and pure-Python kernels must agree bit for bit."""
import numpy as np
import pytest

from soupfields import _kernels
from soupfields._kernels import fallback
from soupfields._mc_tables import EDGE_TABLE, TRI_TABLE
from soupfields.field import SplitSphereField
from soupfields.geometry import NnIndex
from soupfields.mesher import extract_grid

needs_compiled = pytest.mark.skipif(not _kernels.HAVE_COMPILED,
                                    reason="compiled kernels not built")


@needs_compiled
def test_kdtree_query_backends_identical():
    rng = np.random.default_rng(0)
    pts = rng.random((3000, 3))
    queries = rng.random((800, 3)) * 1.4 - 0.2
    index = NnIndex(pts)
    args = (index.points, index._perm, index._axis, index._split,
            index._left, index._right, index._start, index._end, queries)
    i1 = np.empty(len(queries), dtype=np.int64)
    d1 = np.empty(len(queries))
    _kernels._core.kdtree_query(*args, i1, d1)
    i2 = np.empty(len(queries), dtype=np.int64)
    d2 = np.empty(len(queries))
    fallback.kdtree_query(*args, i2, d2)
    np.testing.assert_array_equal(i1, i2)
    np.testing.assert_array_equal(d1, d2)


@needs_compiled
def test_kdtree_with_duplicates_and_ties():
    rng = np.random.default_rng(1)
    base = rng.random((50, 3)).round(1)  # heavy duplication
    pts = np.concatenate([base, base, base])
    queries = np.concatenate([base[:20], rng.random((50, 3)).round(1)])
    index = NnIndex(pts)
    args = (index.points, index._perm, index._axis, index._split,
            index._left, index._right, index._start, index._end, queries)
    i1 = np.empty(len(queries), dtype=np.int64)
    d1 = np.empty(len(queries))
    _kernels._core.kdtree_query(*args, i1, d1)
    i2 = np.empty(len(queries), dtype=np.int64)
    d2 = np.empty(len(queries))
    fallback.kdtree_query(*args, i2, d2)
    np.testing.assert_array_equal(i1, i2)
    np.testing.assert_array_equal(d1, d2)


@needs_compiled
def test_mc_cells_backends_identical():
    grid = extract_grid(SplitSphereField((0, 0, 0), 0.4, 0.1), 8, 2)
    args = (np.ascontiguousarray(grid.voxels), np.ascontiguousarray(grid.corner_values),
            grid.h / 2, float(grid.origin[0]), float(grid.origin[1]),
            float(grid.origin[2]), grid.h, grid.lattice_corners, grid.lattice_corners,
            EDGE_TABLE, TRI_TABLE)
    k1, p1 = _kernels._core.mc_cells(*args)
    k2, p2 = fallback.mc_cells(*args)
    np.testing.assert_array_equal(k1, k2)
    np.testing.assert_array_equal(p1, p2)


@needs_compiled
def test_mc_cells_empty_input():
    args = (np.empty((0, 3), dtype=np.int64), np.empty((0, 8)),
            0.01, 0.0, 0.0, 0.0, 0.1, 10, 10, EDGE_TABLE, TRI_TABLE)
    k1, p1 = _kernels._core.mc_cells(*args)
    k2, p2 = fallback.mc_cells(*args)
    assert len(k1) == len(k2) == 0
    assert p1.shape == (0, 3)


def test_backend_reported():
    assert _kernels.BACKEND in ("compiled", "fallback")
    import soupfields

    assert soupfields.kernel_backend == _kernels.BACKEND
