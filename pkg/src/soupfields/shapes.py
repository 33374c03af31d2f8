"""Parametric test-shape generators, emitted as indexed triangle meshes.

All shapes are built directly in normalized coordinates: the longest bbox
axis spans exactly [-0.5, 0.5] and the others are centered, so re-running
normalization on the emitted soup is the identity.
"""
from __future__ import annotations

import numpy as np

from .errors import DataError


def split_sphere_mesh(radius: float = 0.5, gap: float = 0.1,
                      rings: int = 16, segments: int = 32):
    """Latitude/longitude sphere tessellation with the band |z| < gap removed.

    The two caps end on rings exactly at z = +-gap; gap=0 yields a closed
    sphere (the caps share the equator). Returns (vertices, faces).
    """
    if not (0.0 <= gap < radius):
        raise DataError("gap half-width must satisfy 0 <= gap < radius")
    if rings < 1 or segments < 3:
        raise DataError("need rings >= 1 and segments >= 3")
    theta_lo = float(np.arccos(gap / radius))

    verts = []
    faces = []

    def cap(theta_pole, theta_edge):
        base = len(verts)
        thetas = np.linspace(theta_pole, theta_edge, rings + 1)
        verts.append((0.0, 0.0, radius * np.cos(theta_pole)))
        phis = np.arange(segments) / segments * 2.0 * np.pi
        for theta in thetas[1:]:
            s = radius * np.sin(theta)
            z = radius * np.cos(theta)
            for phi in phis:
                verts.append((s * np.cos(phi), s * np.sin(phi), z))
        ring0 = base + 1
        for j in range(segments):
            faces.append((base, ring0 + j, ring0 + (j + 1) % segments))
        for r in range(rings - 1):
            a = ring0 + r * segments
            b = a + segments
            for j in range(segments):
                j2 = (j + 1) % segments
                faces.append((a + j, b + j, b + j2))
                faces.append((a + j, b + j2, a + j2))

    cap(0.0, theta_lo)             # top cap, ends at z = +gap
    cap(np.pi, np.pi - theta_lo)   # bottom cap, ends at z = -gap
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def sphere_mesh(radius: float = 0.5, rings: int = 16, segments: int = 32):
    return split_sphere_mesh(radius=radius, gap=0.0, rings=rings, segments=segments)


def intersecting_planes_mesh(n_planes: int = 3, half: float = 0.5):
    """n quads through the z-axis, evenly rotated; 2 triangles per quad."""
    if n_planes < 1:
        raise DataError("need at least one plane")
    verts = []
    faces = []
    for k in range(n_planes):
        ang = k * np.pi / n_planes
        u = np.array([-np.sin(ang), np.cos(ang), 0.0]) * half
        w = np.array([0.0, 0.0, half])
        base = len(verts)
        verts.extend([-u - w, u - w, u + w, -u + w])
        faces.append((base, base + 1, base + 2))
        faces.append((base, base + 2, base + 3))
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def bathtub_mesh(half_y: float = 0.3, z_lo: float = -0.2, z_hi: float = 0.2,
                 rim: float = 0.08):
    """Open box with an inward rim at the top: floor, four walls, four rim quads.

    The x extent is fixed at [-0.5, 0.5] (the longest axis).
    """
    if not (0 < rim < min(0.5, half_y)):
        raise DataError("rim width must be positive and smaller than the half-extents")
    if z_hi <= z_lo:
        raise DataError("z_hi must exceed z_lo")
    hx = 0.5
    verts = []
    faces = []

    def quad(a, b, c, d):
        base = len(verts)
        verts.extend([a, b, c, d])
        faces.append((base, base + 1, base + 2))
        faces.append((base, base + 2, base + 3))

    # Floor.
    quad((-hx, -half_y, z_lo), (hx, -half_y, z_lo), (hx, half_y, z_lo), (-hx, half_y, z_lo))
    # Walls.
    quad((-hx, -half_y, z_lo), (hx, -half_y, z_lo), (hx, -half_y, z_hi), (-hx, -half_y, z_hi))
    quad((hx, half_y, z_lo), (-hx, half_y, z_lo), (-hx, half_y, z_hi), (hx, half_y, z_hi))
    quad((-hx, half_y, z_lo), (-hx, -half_y, z_lo), (-hx, -half_y, z_hi), (-hx, half_y, z_hi))
    quad((hx, -half_y, z_lo), (hx, half_y, z_lo), (hx, half_y, z_hi), (hx, -half_y, z_hi))
    # Inward rim at the top; left/right strips span only the inner y range.
    ix, iy = hx - rim, half_y - rim
    quad((-hx, iy, z_hi), (hx, iy, z_hi), (hx, half_y, z_hi), (-hx, half_y, z_hi))
    quad((-hx, -half_y, z_hi), (hx, -half_y, z_hi), (hx, -iy, z_hi), (-hx, -iy, z_hi))
    quad((-hx, -iy, z_hi), (-ix, -iy, z_hi), (-ix, iy, z_hi), (-hx, iy, z_hi))
    quad((ix, -iy, z_hi), (hx, -iy, z_hi), (hx, iy, z_hi), (ix, iy, z_hi))
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)
