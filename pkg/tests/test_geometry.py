import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soupfields.errors import DataError
from soupfields.geometry import (NnIndex, TriangleSoup, build_nn_index, nearest,
                                 normalize_soup, point_triangle_distance,
                                 soup_nearest, triangle_areas)


def brute_nn(points, queries):
    """Linear-scan oracle with the same lowest-index tie break."""
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    idx = d2.argmin(axis=1)  # first occurrence = lowest index
    return idx, np.sqrt(d2[np.arange(len(queries)), idx])


def sample_on_triangle(tri, n, seed):
    """Rejection-free uniform sampling on a triangle (oracle helper)."""
    rng = np.random.default_rng(seed)
    u, v = rng.random(n), rng.random(n)
    su = np.sqrt(u)
    b = np.stack([1 - su, su * (1 - v), su * v], axis=1)
    return b @ tri


class TestPointTriangleDistance:
    def test_apex_above_vertex(self, unit_triangle):
        dist, closest = point_triangle_distance((0, 0, 1), unit_triangle)
        assert dist == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(closest, [0, 0, 0], atol=1e-15)

    def test_point_on_triangle(self, unit_triangle):
        p = (0.25, 0.25, 0.0)
        dist, closest = point_triangle_distance(p, unit_triangle)
        assert dist == 0.0
        np.testing.assert_allclose(closest, p, atol=1e-15)

    def test_outside_edge_region(self, unit_triangle):
        # Surface-sampling oracle: min distance over a dense uniform sample.
        p = np.array([2.0, 2.0, 0.0])
        pts = sample_on_triangle(unit_triangle, 10 ** 6, seed=11)
        oracle = np.linalg.norm(pts - p, axis=1).min()
        dist, closest = point_triangle_distance(p, unit_triangle)
        assert abs(dist - oracle) < 2e-3  # oracle resolution
        # Frozen exact values: closest point is the hypotenuse midpoint.
        assert dist == pytest.approx(1.5 * np.sqrt(2), abs=1e-12)
        np.testing.assert_allclose(closest, [0.5, 0.5, 0.0], atol=1e-12)

    def test_vertex_permutation_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            tri = rng.standard_normal((3, 3))
            if triangle_areas(tri[None])[0] < 1e-6:
                continue
            p = rng.standard_normal(3) * 2
            d0, c0 = point_triangle_distance(p, tri)
            for perm in ((1, 2, 0), (2, 0, 1), (0, 2, 1)):
                d1, c1 = point_triangle_distance(p, tri[list(perm)])
                assert d1 == pytest.approx(d0, abs=1e-12)
                np.testing.assert_allclose(c1, c0, atol=1e-9)

    def test_closest_point_is_on_triangle(self):
        # Barycentric coordinates of the closest point lie in the simplex.
        rng = np.random.default_rng(6)
        for _ in range(100):
            tri = rng.standard_normal((3, 3))
            if triangle_areas(tri[None])[0] < 1e-6:
                continue
            p = rng.standard_normal(3)
            dist, c = point_triangle_distance(p, tri)
            a, b = tri[1] - tri[0], tri[2] - tri[0]
            m = np.array([[a @ a, a @ b], [a @ b, b @ b]])
            uv = np.linalg.solve(m, np.array([a @ (c - tri[0]), b @ (c - tri[0])]))
            assert -1e-9 <= uv[0] <= 1 + 1e-9
            assert -1e-9 <= uv[1] <= 1 + 1e-9
            assert uv.sum() <= 1 + 1e-9
            assert dist == pytest.approx(np.linalg.norm(p - c), abs=1e-12)

    def test_degenerate_triangle_rejected(self):
        with pytest.raises(DataError):
            point_triangle_distance((0, 0, 1), [(0, 0, 0), (1, 0, 0), (2, 0, 0)])


class TestNormalizeSoup:
    def test_unit_cube_bbox(self):
        tris = np.array([
            [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
            [[1, 1, 1], [0, 1, 1], [1, 0, 1]],
        ], dtype=float)
        out, scale, offset = normalize_soup(TriangleSoup(tris))
        assert scale == pytest.approx(1.0)
        np.testing.assert_allclose(offset, [-0.5, -0.5, -0.5])
        lo, hi = out.bbox
        np.testing.assert_allclose(lo, [-0.5, -0.5, -0.5], atol=1e-12)
        np.testing.assert_allclose(hi, [0.5, 0.5, 0.5], atol=1e-12)

    def test_anisotropic_bbox(self):
        tris = np.array([
            [[0, 0, 0], [2, 0, 0], [0, 1, 0]],
            [[2, 1, 1], [0, 1, 1], [2, 0, 1]],
        ], dtype=float)
        out, scale, offset = normalize_soup(TriangleSoup(tris))
        assert scale == pytest.approx(0.5)
        lo, hi = out.bbox
        assert lo[0] == pytest.approx(-0.5) and hi[0] == pytest.approx(0.5)
        # shorter axes centered
        assert lo[1] == pytest.approx(-0.25) and hi[1] == pytest.approx(0.25)

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        tris = rng.random((20, 3, 3)) * 3 + 1
        soup = TriangleSoup(tris)
        out, scale, offset = normalize_soup(soup)
        restored = (out.tris - offset) / scale
        np.testing.assert_allclose(restored, soup.tris, atol=1e-9)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        soup = TriangleSoup(rng.random((10, 3, 3)))
        once, _, _ = normalize_soup(soup)
        twice, scale, _ = normalize_soup(once)
        assert scale == pytest.approx(1.0)
        np.testing.assert_allclose(twice.tris, once.tris, atol=1e-9)

    def test_zero_extent_rejected(self):
        tris = np.zeros((1, 3, 3))
        with pytest.raises(DataError):
            TriangleSoup(tris)  # degenerate already rejected at construction


class TestTriangleSoup:
    def test_degenerate_triangles_dropped_with_count(self):
        tris = np.array([
            [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
            [[0, 0, 0], [1, 0, 0], [2, 0, 0]],  # collinear: dropped
        ], dtype=float)
        soup = TriangleSoup(tris)
        assert len(soup) == 1
        assert soup.degenerate_dropped == 1

    def test_face_normals_orthogonal_to_edges(self):
        rng = np.random.default_rng(4)
        soup = TriangleSoup(rng.standard_normal((50, 3, 3)))
        e1 = soup.tris[:, 1] - soup.tris[:, 0]
        e2 = soup.tris[:, 2] - soup.tris[:, 0]
        assert np.abs(np.einsum("ij,ij->i", soup.normals, e1)).max() < 1e-6
        assert np.abs(np.einsum("ij,ij->i", soup.normals, e2)).max() < 1e-6
        np.testing.assert_allclose(np.linalg.norm(soup.normals, axis=1), 1.0, atol=1e-9)

    def test_digest_changes_with_content(self):
        rng = np.random.default_rng(8)
        t = rng.random((4, 3, 3))
        assert TriangleSoup(t).digest() != TriangleSoup(t + 1e-9).digest()
        assert TriangleSoup(t).digest() == TriangleSoup(t.copy()).digest()


class TestNnIndex:
    def test_single_sample(self):
        idx = build_nn_index(np.array([[0.1, 0.2, 0.3]]))
        i, d = nearest(idx, (1.0, 1.0, 1.0))
        assert i == 0
        assert d == pytest.approx(np.linalg.norm([0.9, 0.8, 0.7]))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        pts = rng.random((10 ** 4, 3))
        queries = rng.random((10 ** 3, 3)) * 1.2 - 0.1
        idx = NnIndex(pts)
        gi, gd = idx.query(queries)
        bi, bd = brute_nn(pts, queries)
        assert (gi == bi).all()
        assert (gd == bd).all()  # exact, not approximate

    def test_duplicate_points_lowest_index(self):
        pts = np.array([[0.5, 0.5, 0.5]] * 3 + [[0.0, 0.0, 0.0]])
        i, d = nearest(NnIndex(pts), (0.5, 0.5, 0.5))
        assert i == 0
        assert d == 0.0

    def test_query_at_indexed_point(self):
        rng = np.random.default_rng(1)
        pts = rng.random((100, 3))
        i, d = nearest(NnIndex(pts), pts[42])
        assert i == 42
        assert d == 0.0

    def test_equidistant_tie_breaks_low(self):
        pts = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
        i, d = nearest(NnIndex(pts), (0.0, 0.0, 0.0))
        assert i == 0
        assert d == pytest.approx(1.0)

    @settings(deadline=None, max_examples=30)
    @given(st.integers(min_value=1, max_value=400), st.integers(0, 2 ** 31 - 1))
    def test_random_configurations_match_brute(self, n, seed):
        rng = np.random.default_rng(seed)
        pts = rng.random((n, 3))
        queries = rng.random((10, 3))
        gi, gd = NnIndex(pts).query(queries)
        bi, bd = brute_nn(pts, queries)
        assert (gi == bi).all() and (gd == bd).all()

    def test_concurrent_queries_match_serial(self):
        from concurrent.futures import ThreadPoolExecutor

        rng = np.random.default_rng(9)
        pts = rng.random((5000, 3))
        queries = rng.random((2000, 3))
        index = NnIndex(pts)
        serial = index.query(queries)
        with ThreadPoolExecutor(max_workers=4) as pool:
            chunks = [queries[s:s + 250] for s in range(0, 2000, 250)]
            parts = list(pool.map(index.query, chunks))
        par_i = np.concatenate([p[0] for p in parts])
        par_d = np.concatenate([p[1] for p in parts])
        assert (serial[0] == par_i).all() and (serial[1] == par_d).all()

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            NnIndex(np.empty((0, 3)))


class TestSoupNearest:
    def test_matches_per_triangle_scan(self, quad_soup):
        rng = np.random.default_rng(12)
        pts = rng.standard_normal((100, 3))
        dist, closest, tri_idx = soup_nearest(quad_soup, pts)
        for k in range(len(pts)):
            best = min(point_triangle_distance(pts[k], quad_soup.tris[t])[0]
                       for t in range(len(quad_soup)))
            assert dist[k] == pytest.approx(best, abs=1e-12)
