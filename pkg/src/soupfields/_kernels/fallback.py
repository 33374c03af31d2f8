"""Pure-Python/numpy kernels, used when the compiled extension is absent.

Semantics (including float operation order) mirror the compiled versions
exactly, so both backends produce bit-identical results.
"""
import math

import numpy as np

#: Marching-cubes cell corner offsets (x, y, z), classic Bourke numbering.
MC_CORNER_OFFSETS = np.array(
    [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
     (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
    dtype=np.int64,
)

#: Per cell edge e: lattice axis, lower-corner number, upper-corner number.
MC_EDGE_AXIS = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2], dtype=np.int64)
MC_EDGE_LOWER = np.array([0, 1, 3, 0, 4, 5, 7, 4, 0, 1, 2, 3], dtype=np.int64)
MC_EDGE_UPPER = np.array([1, 2, 2, 3, 5, 6, 6, 7, 4, 5, 6, 7], dtype=np.int64)


def kdtree_query(pts, perm, axis, split, left, right, start, end,
                 queries, out_idx, out_d2):
    """Exact NN query over a median-split kd-tree in flat-array form.

    Ties on squared distance break to the lowest original index. Writes the
    winning index and squared distance into out_idx/out_d2.
    """
    pts = np.asarray(pts)
    for qi in range(len(queries)):
        qx = float(queries[qi, 0])
        qy = float(queries[qi, 1])
        qz = float(queries[qi, 2])
        best_d2 = math.inf
        best_i = -1
        stack = [(0, -1.0)]
        while stack:
            node, gap2 = stack.pop()
            if gap2 > best_d2:
                continue
            ax = axis[node]
            if ax < 0:
                for j in range(start[node], end[node]):
                    oi = int(perm[j])
                    dx = qx - pts[oi, 0]
                    dy = qy - pts[oi, 1]
                    dz = qz - pts[oi, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2 or (d2 == best_d2 and oi < best_i):
                        best_d2 = d2
                        best_i = oi
                continue
            diff = (qx, qy, qz)[ax] - split[node]
            if diff < 0.0:
                near, far = left[node], right[node]
            else:
                near, far = right[node], left[node]
            stack.append((far, diff * diff))
            stack.append((near, -1.0))
        out_idx[qi] = best_i
        out_d2[qi] = best_d2


def mc_cells(coords, values, tau, ox, oy, oz, h, ny1, nz1, edge_table, tri_table):
    """Emit marching-cubes triangles for a batch of cells.

    coords: (V, 3) base corner index of each cell in the finest lattice;
    values: (V, 8) corner scalars in Bourke numbering. Inside = value < tau.
    Returns (keys (3M,), pos (3M, 3)): one canonical lattice-edge key and one
    interpolated position per emitted triangle vertex, in cell order.
    """
    values = np.asarray(values, dtype=np.float64)
    inside = values < tau
    cube_idx = np.zeros(len(values), dtype=np.int64)
    for i in range(8):
        cube_idx |= inside[:, i].astype(np.int64) << i
    active = np.nonzero(edge_table[cube_idx] != 0)[0]

    keys = []
    pos = []
    for ci in active:
        ix = int(coords[ci, 0])
        iy = int(coords[ci, 1])
        iz = int(coords[ci, 2])
        vals = values[ci]
        emask = int(edge_table[cube_idx[ci]])
        ekeys = [0] * 12
        epos = [(0.0, 0.0, 0.0)] * 12
        for e in range(12):
            if not (emask >> e) & 1:
                continue
            lo = int(MC_EDGE_LOWER[e])
            hi = int(MC_EDGE_UPPER[e])
            ax = int(MC_EDGE_AXIS[e])
            ga = float(vals[lo]) - tau
            gb = float(vals[hi]) - tau
            t = ga / (ga - gb)
            cx = ix + int(MC_CORNER_OFFSETS[lo, 0])
            cy = iy + int(MC_CORNER_OFFSETS[lo, 1])
            cz = iz + int(MC_CORNER_OFFSETS[lo, 2])
            px = ox + cx * h
            py = oy + cy * h
            pz = oz + cz * h
            if ax == 0:
                px += t * h
            elif ax == 1:
                py += t * h
            else:
                pz += t * h
            ekeys[e] = ((cx * ny1 + cy) * nz1 + cz) * 3 + ax
            epos[e] = (px, py, pz)
        row = tri_table[cube_idx[ci]]
        for k in range(0, 16, 3):
            if row[k] < 0:
                break
            for e in (row[k], row[k + 1], row[k + 2]):
                keys.append(ekeys[e])
                pos.append(epos[e])

    if not keys:
        return np.empty(0, dtype=np.int64), np.empty((0, 3), dtype=np.float64)
    return np.asarray(keys, dtype=np.int64), np.asarray(pos, dtype=np.float64)
