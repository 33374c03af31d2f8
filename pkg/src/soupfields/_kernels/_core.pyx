# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: exact kd-tree NN query and marching-cubes cell emission.

Bit-compatible with soupfields._kernels.fallback; the Python versions are
the reference semantics.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double INF = float("inf")

# Shared constant tables (Bourke cell numbering); kept in sync with fallback.py.
cdef int[8][3] CORNER_OFFSETS
CORNER_OFFSETS[0][:] = [0, 0, 0]
CORNER_OFFSETS[1][:] = [1, 0, 0]
CORNER_OFFSETS[2][:] = [1, 1, 0]
CORNER_OFFSETS[3][:] = [0, 1, 0]
CORNER_OFFSETS[4][:] = [0, 0, 1]
CORNER_OFFSETS[5][:] = [1, 0, 1]
CORNER_OFFSETS[6][:] = [1, 1, 1]
CORNER_OFFSETS[7][:] = [0, 1, 1]

cdef int[12] EDGE_AXIS
cdef int[12] EDGE_LOWER
cdef int[12] EDGE_UPPER
EDGE_AXIS[:] = [0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2]
EDGE_LOWER[:] = [0, 1, 3, 0, 4, 5, 7, 4, 0, 1, 2, 3]
EDGE_UPPER[:] = [1, 2, 2, 3, 5, 6, 6, 7, 4, 5, 6, 7]


def kdtree_query(double[:, ::1] pts, long long[::1] perm,
                 int[::1] axis, double[::1] split,
                 int[::1] left, int[::1] right,
                 int[::1] start, int[::1] end,
                 double[:, ::1] queries,
                 long long[::1] out_idx, double[::1] out_d2):
    """Exact NN with lowest-index tie break; see fallback.kdtree_query."""
    cdef Py_ssize_t m = queries.shape[0]
    cdef Py_ssize_t qi, j
    cdef int node, ax, sp
    cdef long long oi, best_i
    cdef double qx, qy, qz, dx, dy, dz, d2, best_d2, diff, gap2
    cdef int[128] node_stack
    cdef double[128] gap_stack

    with nogil:
        for qi in range(m):
            qx = queries[qi, 0]
            qy = queries[qi, 1]
            qz = queries[qi, 2]
            best_d2 = INF
            best_i = -1
            node_stack[0] = 0
            gap_stack[0] = -1.0
            sp = 1
            while sp > 0:
                sp -= 1
                node = node_stack[sp]
                gap2 = gap_stack[sp]
                if gap2 > best_d2:
                    continue
                ax = axis[node]
                if ax < 0:
                    for j in range(start[node], end[node]):
                        oi = perm[j]
                        dx = qx - pts[oi, 0]
                        dy = qy - pts[oi, 1]
                        dz = qz - pts[oi, 2]
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 < best_d2 or (d2 == best_d2 and oi < best_i):
                            best_d2 = d2
                            best_i = oi
                    continue
                if ax == 0:
                    diff = qx - split[node]
                elif ax == 1:
                    diff = qy - split[node]
                else:
                    diff = qz - split[node]
                if diff < 0.0:
                    node_stack[sp] = right[node]
                    gap_stack[sp] = diff * diff
                    sp += 1
                    node_stack[sp] = left[node]
                else:
                    node_stack[sp] = left[node]
                    gap_stack[sp] = diff * diff
                    sp += 1
                    node_stack[sp] = right[node]
                gap_stack[sp] = -1.0
                sp += 1
            out_idx[qi] = best_i
            out_d2[qi] = best_d2


def mc_cells(long long[:, ::1] coords, double[:, ::1] values, double tau,
             double ox, double oy, double oz, double h,
             long long ny1, long long nz1,
             int[::1] edge_table, int[:, ::1] tri_table):
    """Marching-cubes triangle emission; see fallback.mc_cells."""
    cdef Py_ssize_t n_cells = coords.shape[0]
    cdef Py_ssize_t ci, out
    cdef int i, e, k, cube, emask, ax, lo, hi
    cdef long long ix, iy, iz, cx, cy, cz
    cdef double ga, gb, t, px, py, pz

    # First pass: count emitted vertices.
    cdef Py_ssize_t total = 0
    cdef int[256] tri_counts
    for cube in range(256):
        k = 0
        while k < 16 and tri_table[cube, k] >= 0:
            k += 3
        tri_counts[cube] = k
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cube_arr = np.zeros(n_cells, dtype=np.int64)
    cdef long long[::1] cubes = cube_arr
    with nogil:
        for ci in range(n_cells):
            cube = 0
            for i in range(8):
                if values[ci, i] < tau:
                    cube |= 1 << i
            cubes[ci] = cube
    for ci in range(n_cells):
        total += tri_counts[cubes[ci]]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] keys_arr = np.empty(total, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pos_arr = np.empty((total, 3), dtype=np.float64)
    cdef long long[::1] keys = keys_arr
    cdef double[:, ::1] pos = pos_arr

    cdef long long[12] ekeys
    cdef double[12][3] epos

    out = 0
    with nogil:
        for ci in range(n_cells):
            cube = <int> cubes[ci]
            emask = edge_table[cube]
            if emask == 0:
                continue
            ix = coords[ci, 0]
            iy = coords[ci, 1]
            iz = coords[ci, 2]
            for e in range(12):
                if not (emask >> e) & 1:
                    continue
                lo = EDGE_LOWER[e]
                hi = EDGE_UPPER[e]
                ax = EDGE_AXIS[e]
                ga = values[ci, lo] - tau
                gb = values[ci, hi] - tau
                t = ga / (ga - gb)
                cx = ix + CORNER_OFFSETS[lo][0]
                cy = iy + CORNER_OFFSETS[lo][1]
                cz = iz + CORNER_OFFSETS[lo][2]
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
                epos[e][0] = px
                epos[e][1] = py
                epos[e][2] = pz
            k = 0
            while k < 16 and tri_table[cube, k] >= 0:
                for i in range(3):
                    e = tri_table[cube, k + i]
                    keys[out] = ekeys[e]
                    pos[out, 0] = epos[e][0]
                    pos[out, 1] = epos[e][1]
                    pos[out, 2] = epos[e][2]
                    out += 1
                k += 3

    return keys_arr, pos_arr
