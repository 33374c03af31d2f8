"""Core geometric types: triangle soups, exact point-triangle distance, and an
exact nearest-neighbor index over oriented surface samples.

Points and directions are plain float64 numpy arrays of shape (3,) or (N, 3).
A triangle soup is an unstructured (T, 3, 3) vertex array with no
connectivity, manifoldness, or orientation guarantees.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _parallel
from ._kernels import kdtree_query
from .errors import DataError

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
UNIT_TOL = 1e-6

_KD_LEAF = 16


def as_points(a) -> np.ndarray:
    """Validate and return an (N, 3) float64 array of finite points."""
    pts = np.ascontiguousarray(a, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"expected points of shape (N, 3), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise DataError("non-finite point coordinates")
    return pts


def normalized(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise DataError("cannot normalize near-zero vector")
    return v / n


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def face_normals(tris: np.ndarray) -> np.ndarray:
    """Unit normals by the right-hand rule from vertex order."""
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    return cross / np.linalg.norm(cross, axis=1, keepdims=True)


@dataclass
class TriangleSoup:
    """Raw triangle list; degenerate faces are dropped at construction.

    tris: (T, 3, 3) float64, tris[t, i] is the i-th vertex of triangle t.
    """

    tris: np.ndarray
    degenerate_dropped: int = 0
    areas: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tris = np.ascontiguousarray(self.tris, dtype=np.float64)
        if tris.ndim != 3 or tris.shape[1:] != (3, 3):
            raise DataError(f"triangle array must be (T, 3, 3), got {tris.shape}")
        if tris.shape[0] == 0:
            raise DataError("empty triangle soup")
        if not np.isfinite(tris).all():
            raise DataError("non-finite vertex coordinates in soup")
        areas = triangle_areas(tris)
        keep = areas > DEGENERATE_AREA
        dropped = int((~keep).sum())
        if dropped:
            log.warning("dropped %d degenerate triangles (area <= %g)", dropped, DEGENERATE_AREA)
            tris = tris[keep]
            areas = areas[keep]
            if tris.shape[0] == 0:
                raise DataError("all triangles degenerate")
        self.tris = tris
        self.degenerate_dropped += dropped
        self.areas = areas
        self.normals = face_normals(tris)

    @classmethod
    def from_arrays(cls, vertices, faces) -> "TriangleSoup":
        vertices = as_points(vertices)
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise DataError(f"face array must be (F, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise DataError("face index out of range")
        return cls(vertices[faces])

    def __len__(self) -> int:
        return self.tris.shape[0]

    @property
    def bbox(self):
        v = self.tris.reshape(-1, 3)
        return v.min(axis=0), v.max(axis=0)

    def digest(self) -> bytes:
        """Content hash of the triangle data (order-sensitive)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.tris, dtype="<f8").tobytes())
        return h.digest()


def normalize_soup(soup: TriangleSoup):
    """Scale/translate so the longest bbox axis spans exactly [-0.5, 0.5].

    Returns (normalized_soup, scale, offset) with new = old * scale + offset;
    the other axes are centered inside the unit interval.
    """
    lo, hi = soup.bbox
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise DataError("zero-extent soup cannot be normalized")
    scale = 1.0 / longest
    center = (lo + hi) / 2.0
    offset = -center * scale
    tris = soup.tris * scale + offset
    return TriangleSoup(tris), scale, offset


# ---------------------------------------------------------------------------
# Exact point-triangle distance (closest-point regions after Ericson).
# ---------------------------------------------------------------------------

def closest_on_triangles(points: np.ndarray, tris: np.ndarray):
    """Closest point on each triangle for each query point.

    points: (N, 3), tris: (T, 3, 3). Returns (dist (N, T), closest (N, T, 3)).
    All seven Voronoi regions handled by masks; exact up to float64 rounding.
    """
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab = b - a
    ac = c - a
    p = points[:, None, :]  # (N, 1, 3)

    ap = p - a
    d1 = np.einsum("tk,ntk->nt", ab, ap)
    d2 = np.einsum("tk,ntk->nt", ac, ap)
    bp = p - b
    d3 = np.einsum("tk,ntk->nt", ab, bp)
    d4 = np.einsum("tk,ntk->nt", ac, bp)
    cp = p - c
    d5 = np.einsum("tk,ntk->nt", ab, cp)
    d6 = np.einsum("tk,ntk->nt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n_pts, n_tris = d1.shape
    closest = np.empty((n_pts, n_tris, 3))
    done = np.zeros((n_pts, n_tris), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        if m.any():
            closest[m] = value if value.ndim == 2 else np.broadcast_to(value, closest.shape)[m]
            done[m] = True
        return m

    # Vertex regions.
    m = (d1 <= 0) & (d2 <= 0)
    closest[m] = np.broadcast_to(a, closest.shape)[m]
    done |= m
    m = (d3 >= 0) & (d4 <= d3) & ~done
    closest[m] = np.broadcast_to(b, closest.shape)[m]
    done |= m
    m = (d6 >= 0) & (d5 <= d6) & ~done
    closest[m] = np.broadcast_to(c, closest.shape)[m]
    done |= m

    # Edge AB.
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0) & ~done
    if m.any():
        v = d1 / (d1 - d3)
        closest[m] = (a + v[..., None] * ab)[m]
        done |= m
    # Edge AC.
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0) & ~done
    if m.any():
        w = d2 / (d2 - d6)
        closest[m] = (a + w[..., None] * ac)[m]
        done |= m
    # Edge BC.
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0) & ~done
    if m.any():
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        closest[m] = (b + w[..., None] * (c - b))[m]
        done |= m

    # Face interior.
    m = ~done
    if m.any():
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        closest[m] = (a + v[..., None] * ab + w[..., None] * ac)[m]

    dist = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return dist, closest


def point_triangle_distance(p, tri):
    """Exact distance from a point to a single triangle.

    Returns (dist, closest_point); closest lies on the triangle.
    """
    p = np.asarray(p, dtype=np.float64).reshape(3)
    tri = np.asarray(tri, dtype=np.float64).reshape(1, 3, 3)
    if triangle_areas(tri)[0] <= DEGENERATE_AREA:
        raise DataError("degenerate triangle")
    dist, closest = closest_on_triangles(p.reshape(1, 3), tri)
    return float(dist[0, 0]), closest[0, 0]


def soup_nearest(soup: TriangleSoup, points: np.ndarray, chunk: int = 256):
    """Brute-force nearest surface point over all soup triangles.

    Returns (dist (N,), closest (N, 3), tri_idx (N,)); ties resolved to the
    lowest triangle index. Quadratic in memory per chunk; intended for exact
    oracle-grade evaluation, not bulk queries.
    """
    points = as_points(points)
    n = len(points)
    dist = np.empty(n)
    closest = np.empty((n, 3))
    tri_idx = np.empty(n, dtype=np.int64)
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        d, c = closest_on_triangles(points[s:e], soup.tris)
        best = np.argmin(d, axis=1)  # first minimum = lowest triangle index
        rows = np.arange(e - s)
        dist[s:e] = d[rows, best]
        closest[s:e] = c[rows, best]
        tri_idx[s:e] = best
    return dist, closest, tri_idx


# ---------------------------------------------------------------------------
# Exact nearest-neighbor index (median-split kd-tree).
# ---------------------------------------------------------------------------

class NnIndex:
    """Immutable exact nearest-neighbor index over (point, normal) pairs.

    Query results are identical to a brute-force scan, with ties broken by
    the lowest insertion index. Safe for concurrent queries once built.
    """

    def __init__(self, points, normals=None):
        points = as_points(points)
        if len(points) == 0:
            raise DataError("cannot index an empty point set")
        self.points = points
        self.normals = None if normals is None else as_points(normals)
        if self.normals is not None and len(self.normals) != len(points):
            raise DataError("points and normals length mismatch")
        self._build()

    def _build(self):
        n = len(self.points)
        perm = np.arange(n, dtype=np.int64)
        axis, split, left, right, start, end = [], [], [], [], [], []

        def new_node():
            axis.append(-1)
            split.append(0.0)
            left.append(-1)
            right.append(-1)
            start.append(-1)
            end.append(-1)
            return len(axis) - 1

        # Iterative construction; splits on the widest axis at the median.
        stack = [(new_node(), 0, n)]
        pts = self.points
        while stack:
            node, s, e = stack.pop()
            if e - s <= _KD_LEAF:
                start[node] = s
                end[node] = e
                continue
            seg = perm[s:e]
            coords = pts[seg]
            ax = int(np.argmax(coords.max(axis=0) - coords.min(axis=0)))
            mid = (e - s) // 2
            order = np.argpartition(coords[:, ax], mid)
            perm[s:e] = seg[order]
            axis[node] = ax
            split[node] = float(pts[perm[s + mid], ax])
            lc = new_node()
            rc = new_node()
            left[node] = lc
            right[node] = rc
            stack.append((lc, s, s + mid))
            stack.append((rc, s + mid, e))

        self._perm = perm
        self._axis = np.asarray(axis, dtype=np.int32)
        self._split = np.asarray(split, dtype=np.float64)
        self._left = np.asarray(left, dtype=np.int32)
        self._right = np.asarray(right, dtype=np.int32)
        self._start = np.asarray(start, dtype=np.int32)
        self._end = np.asarray(end, dtype=np.int32)

    def __len__(self) -> int:
        return len(self.points)

    def query2(self, queries):
        """Exact nearest neighbors: (index (M,), squared_dist (M,))."""
        queries = as_points(queries)
        m = len(queries)
        idx = np.empty(m, dtype=np.int64)
        d2 = np.empty(m, dtype=np.float64)

        def work(s, e):
            kdtree_query(
                self.points, self._perm, self._axis, self._split,
                self._left, self._right, self._start, self._end,
                queries[s:e], idx[s:e], d2[s:e],
            )

        _parallel.run_chunked(work, m)
        return idx, d2

    def query(self, queries):
        """Exact nearest neighbors: (index (M,), distance (M,))."""
        idx, d2 = self.query2(queries)
        return idx, np.sqrt(d2)


def build_nn_index(points, normals=None) -> NnIndex:
    return NnIndex(points, normals)


def nearest(index: NnIndex, p):
    """Single-point exact nearest neighbor: (sample_idx, dist)."""
    idx, dist = index.query(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(dist[0])
