"""Multi-resolution iso-surface extraction from an unsigned distance field.

A voxel hierarchy over the padded unit box is refined level by level: a
voxel survives when any of its eight corner values is below the current
edge length h_i, everything else is discarded, and survivors split into
eight children. Corner evaluations are memoized on the finest lattice, so
shared corners are computed once and the sparse values match a dense
evaluation bit for bit. Marching cubes then runs on the surviving leaf
voxels at a small positive threshold tau; the tau-offset of an unsigned
field is a thin two-sided shell, which is the accepted output (no shell
collapsing).

Discarded regions sit at distance >= h_i > tau from the surface, so leaf
cells with unpopulated corners can never contain a crossing; treating them
as outside is exact, not an approximation.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from ._mc_tables import EDGE_TABLE, TRI_TABLE
from .errors import DataError
from .field import Field
from .geometry import triangle_areas

#: Output triangles with area at or below this are dropped.
MIN_TRIANGLE_AREA = 1e-14

_CORNERS = _kernels.MC_CORNER_OFFSETS  # (8, 3), Bourke numbering


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int32

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise DataError("mesh face index out of range")

    def __len__(self):
        return len(self.faces)


@dataclass
class DistanceGrid:
    """Sparse corner lattice of distance values over retained leaf voxels.

    Corner positions are origin + index * h on the finest lattice; corners
    not belonging to a retained voxel are unpopulated (conceptually +inf).
    """

    origin: np.ndarray         # (3,) min corner of the padded root grid
    h: float                   # finest voxel edge / corner spacing
    lattice_corners: int       # corners per axis on the finest lattice
    voxels: np.ndarray         # (V, 3) int64 base corner index per retained voxel
    corner_values: np.ndarray  # (V, 8) float64, Bourke corner order
    initial_res: int
    levels: int
    eval_count: int = 0
    level_debug: list = dc_field(default_factory=list)

    @property
    def nominal_res(self) -> int:
        return self.initial_res * 2 ** self.levels

    def corner_positions(self, fidx: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(fidx, dtype=np.float64) * self.h

    def populated(self):
        """Unique populated corners: (indices (K, 3) int64, values (K,))."""
        if len(self.voxels) == 0:
            return np.empty((0, 3), dtype=np.int64), np.empty(0)
        n1 = self.lattice_corners
        fidx = self.voxels[:, None, :] + _CORNERS[None, :, :]
        lin = (fidx[..., 0] * n1 + fidx[..., 1]) * n1 + fidx[..., 2]
        uniq, first = np.unique(lin.ravel(), return_index=True)
        vals = self.corner_values.ravel()[first]
        out = np.empty((len(uniq), 3), dtype=np.int64)
        out[:, 0], rem = np.divmod(uniq, n1 * n1)
        out[:, 1], out[:, 2] = np.divmod(rem, n1)
        return out, vals

    @classmethod
    def from_dense(cls, values: np.ndarray, origin, h: float) -> "DistanceGrid":
        """Wrap a dense (n+1)^3 corner grid with every voxel retained."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or len(set(values.shape)) != 1:
            raise DataError("dense corner grid must be cubic (n+1)^3")
        n = values.shape[0] - 1
        vox = _lex_voxels(n)
        corner_vals = _gather_dense(values, vox)
        return cls(origin=np.asarray(origin, dtype=np.float64).reshape(3), h=float(h),
                   lattice_corners=n + 1, voxels=vox, corner_values=corner_vals,
                   initial_res=n, levels=0)


def _lex_voxels(n: int) -> np.ndarray:
    r = np.arange(n, dtype=np.int64)
    gx, gy, gz = np.meshgrid(r, r, r, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def _gather_dense(values: np.ndarray, voxels: np.ndarray) -> np.ndarray:
    fidx = voxels[:, None, :] + _CORNERS[None, :, :]
    return values[fidx[..., 0], fidx[..., 1], fidx[..., 2]]


class _CornerCache:
    """Memoized field evaluations keyed by finest-lattice corner index."""

    def __init__(self, field: Field, origin, h: float, n1: int):
        self.field = field
        self.origin = np.asarray(origin, dtype=np.float64)
        self.h = float(h)
        self.n1 = int(n1)
        self.keys = np.empty(0, dtype=np.int64)
        self.vals = np.empty(0, dtype=np.float64)
        self.eval_count = 0

    def _lin(self, fidx):
        return (fidx[..., 0] * self.n1 + fidx[..., 1]) * self.n1 + fidx[..., 2]

    def ensure(self, fidx: np.ndarray) -> None:
        lin = np.unique(self._lin(fidx).ravel())
        pos = np.searchsorted(self.keys, lin)
        pos_c = np.minimum(pos, max(len(self.keys) - 1, 0))
        missing = lin if len(self.keys) == 0 else lin[self.keys[pos_c] != lin]
        if len(missing) == 0:
            return
        fx, rem = np.divmod(missing, self.n1 * self.n1)
        fy, fz = np.divmod(rem, self.n1)
        pts = self.origin + np.stack([fx, fy, fz], axis=1).astype(np.float64) * self.h
        new_vals = self.field.udf(pts)
        self.eval_count += len(missing)
        keys = np.concatenate([self.keys, missing])
        vals = np.concatenate([self.vals, new_vals])
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.vals = vals[order]

    def gather(self, fidx: np.ndarray) -> np.ndarray:
        lin = self._lin(fidx)
        return self.vals[np.searchsorted(self.keys, lin)]


def extract_grid(field: Field, initial_res: int, levels: int,
                 collect_levels: bool = False) -> DistanceGrid:
    """Hierarchically refine the voxel grid and return the final sparse lattice.

    The root grid covers [-0.5, 0.5]^3 plus a one-voxel pad so surfaces
    touching the bbox are not clipped. Refinement keeps voxels whose minimum
    corner value is < h_i; after `levels` subdivisions the criterion is
    applied once more to define the retained leaf set.
    """
    if initial_res < 2:
        raise DataError("initial_res must be >= 2")
    if levels < 0:
        raise DataError("levels must be >= 0")

    n0 = initial_res + 2
    h0 = 1.0 / initial_res
    origin = np.array([-0.5 - h0] * 3)
    h_f = h0 / 2 ** levels
    n1 = n0 * 2 ** levels + 1

    cache = _CornerCache(field, origin, h_f, n1)
    voxels = _lex_voxels(n0)
    debug = []

    retained = np.empty((0, 3), dtype=np.int64)
    corner_values = np.empty((0, 8), dtype=np.float64)
    for level in range(levels + 1):
        step = 2 ** (levels - level)
        h_i = h0 / 2 ** level
        fidx = voxels[:, None, :] * step + _CORNERS[None, :, :] * step
        cache.ensure(fidx)
        vals = cache.gather(fidx)
        keep = vals.min(axis=1) < h_i
        if collect_levels:
            debug.append({"level": level, "h": h_i, "voxels": voxels.copy(),
                          "kept": keep.copy()})
        if level == levels:
            retained = voxels[keep] * step  # step == 1 at the final level
            corner_values = vals[keep]
            break
        children = (voxels[keep, None, :] * 2 + _CORNERS[None, :, :]).reshape(-1, 3)
        lin = (children[:, 0] * n0 * 2 ** (level + 1) + children[:, 1]) * n0 * 2 ** (level + 1) + children[:, 2]
        voxels = children[np.argsort(lin, kind="stable")]

    return DistanceGrid(origin=origin, h=h_f, lattice_corners=n1,
                        voxels=retained, corner_values=corner_values,
                        initial_res=initial_res, levels=levels,
                        eval_count=cache.eval_count, level_debug=debug)


def marching_cubes(grid: DistanceGrid, tau: float) -> Mesh:
    """Classic 256-case marching cubes on (value - tau) over retained voxels.

    Edge crossings are interpolated linearly; shared-edge vertices are
    deduplicated by canonical lattice-edge key, so the output is indexed and
    independent of the kernel backend. Degenerate output triangles are
    dropped.
    """
    if tau <= 0:
        raise DataError("tau must be a small positive threshold")
    if len(grid.voxels) == 0:
        return Mesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int32))

    keys, pos = _kernels.mc_cells(
        np.ascontiguousarray(grid.voxels, dtype=np.int64),
        np.ascontiguousarray(grid.corner_values, dtype=np.float64),
        float(tau),
        float(grid.origin[0]), float(grid.origin[1]), float(grid.origin[2]),
        float(grid.h), int(grid.lattice_corners), int(grid.lattice_corners),
        EDGE_TABLE, TRI_TABLE)
    if len(keys) == 0:
        return Mesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int32))

    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    vertices = pos[first]
    faces = inv.reshape(-1, 3).astype(np.int32)
    areas = triangle_areas(vertices[faces])
    faces = faces[areas > MIN_TRIANGLE_AREA]
    return Mesh(vertices, faces)


def extract_mesh(field: Field, initial_res: int, levels: int,
                 tau: float | None = None) -> Mesh:
    """Grid refinement followed by marching cubes.

    tau defaults to half the final voxel edge, the largest value whose
    offset surface is still resolvable by the final grid.
    """
    grid = extract_grid(field, initial_res, levels)
    if tau is None:
        tau = grid.h / 2.0
    return marching_cubes(grid, tau)
