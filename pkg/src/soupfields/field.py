"""Uniform evaluation interface over distance/normal field pairs.

NeuralField wraps a trained network pair; the analytic fields (sphere,
plane, split sphere, brute-force soup) return exact distances and exact
nearest-surface normals, and serve as ground truth for rendering, meshing
and metric tests. Normals are unoriented (modulo 180 degrees); analytic
fields return a fixed canonical sign per surface patch.

All fields are immutable and safe to evaluate concurrently.
"""
from __future__ import annotations

import numpy as np

from .errors import DataError, DegenerateNormal, NumericError
from .geometry import TriangleSoup, as_points, normalized, soup_nearest
from .mlp import FieldModel, forward

#: Below this output norm the normal net is considered degenerate.
NVF_MIN_NORM = 1e-6


class Field:
    """Distance + normal field pair over R^3 (batch API, float64 in/out)."""

    def udf(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nvf(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nvf_masked(self, pts: np.ndarray):
        """Batch normals plus validity mask; degenerate entries get (0,0,1).

        Tracing code uses this to fall back per pixel instead of aborting.
        """
        try:
            return self.nvf(pts), np.ones(len(as_points(pts)), dtype=bool)
        except DegenerateNormal as exc:
            pts = as_points(pts)
            ok = np.ones(len(pts), dtype=bool)
            ok[exc.indices] = False
            out = np.zeros((len(pts), 3))
            out[:, 2] = 1.0
            if ok.any():
                out[ok] = self.nvf(pts[ok])
            return out, ok

    def eval_udf(self, p) -> float:
        return float(self.udf(as_points(p))[0])

    def eval_nvf(self, p) -> np.ndarray:
        return self.nvf(as_points(p))[0]

    def eval_batch(self, pts):
        """Elementwise (distances, normals); equal to the scalar evals."""
        pts = as_points(pts)
        return self.udf(pts), self.nvf(pts)


class NeuralField(Field):
    """Evaluates a trained FieldModel.

    Raw distance outputs are clamped to >= 0 (a negative raw value has no
    meaning for an unsigned field); normal outputs are normalized to unit
    length, and a near-zero raw normal is an error rather than a guess.
    """

    def __init__(self, model: FieldModel):
        self.model = model

    def udf(self, pts: np.ndarray) -> np.ndarray:
        pts = as_points(pts)
        raw, _ = forward(self.model.udf_params, pts.astype(np.float32))
        out = raw[:, 0].astype(np.float64)
        if not np.isfinite(out).all():
            raise NumericError("non-finite distance-net output")
        return np.maximum(out, 0.0)

    def nvf(self, pts: np.ndarray) -> np.ndarray:
        pts = as_points(pts)
        raw, _ = forward(self.model.nvf_params, pts.astype(np.float32))
        raw = raw.astype(np.float64)
        if not np.isfinite(raw).all():
            raise NumericError("non-finite normal-net output")
        norms = np.linalg.norm(raw, axis=1)
        bad = norms <= NVF_MIN_NORM
        if bad.any():
            raise DegenerateNormal(
                f"normal net output below {NVF_MIN_NORM} at {int(bad.sum())} points",
                indices=np.nonzero(bad)[0])
        return raw / norms[:, None]


class SphereField(Field):
    def __init__(self, center=(0.0, 0.0, 0.0), radius=0.4):
        if radius <= 0:
            raise DataError("sphere radius must be positive")
        self.center = np.asarray(center, dtype=np.float64).reshape(3)
        self.radius = float(radius)

    def udf(self, pts):
        pts = as_points(pts)
        return np.abs(np.linalg.norm(pts - self.center, axis=1) - self.radius)

    def nvf(self, pts):
        pts = as_points(pts)
        w = pts - self.center
        n = np.linalg.norm(w, axis=1)
        out = np.empty_like(w)
        at_center = n < 1e-15
        out[~at_center] = w[~at_center] / n[~at_center, None]
        out[at_center] = (1.0, 0.0, 0.0)  # center is equidistant; fixed convention
        return out


class PlaneField(Field):
    def __init__(self, point=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0)):
        self.point = np.asarray(point, dtype=np.float64).reshape(3)
        self.normal = normalized(np.asarray(normal, dtype=np.float64).reshape(3))

    def udf(self, pts):
        pts = as_points(pts)
        return np.abs((pts - self.point) @ self.normal)

    def nvf(self, pts):
        pts = as_points(pts)
        return np.broadcast_to(self.normal, (len(pts), 3)).copy()


class SplitSphereField(Field):
    """Sphere surface with the axial band |z - cz| < gap removed.

    Exact distances: the closest point is either the radial projection onto
    an allowed cap, or a point on one of the two rim circles at z = cz +- gap.
    """

    def __init__(self, center=(0.0, 0.0, 0.0), radius=0.4, gap=0.1):
        if not (0.0 <= gap < radius):
            raise DataError("gap half-width must satisfy 0 <= gap < radius")
        self.center = np.asarray(center, dtype=np.float64).reshape(3)
        self.radius = float(radius)
        self.gap = float(gap)
        self.rim_rho = float(np.sqrt(radius * radius - gap * gap))

    def _closest(self, pts):
        w = pts - self.center
        s = np.hypot(w[:, 0], w[:, 1])
        z = w[:, 2]
        big_r = np.hypot(s, z)

        # Azimuth direction in the xy-plane; on the axis pick +x.
        u = np.zeros((len(pts), 2))
        on_axis = s < 1e-300
        u[~on_axis] = w[~on_axis, :2] / s[~on_axis, None]
        u[on_axis] = (1.0, 0.0)

        # Radial projection lands on an allowed cap iff |z| * r >= gap * |w|.
        allowed = np.abs(z) * self.radius >= self.gap * big_r
        at_center = big_r < 1e-300
        allowed &= ~at_center

        closest = np.empty((len(pts), 3))
        if allowed.any():
            f = self.radius / big_r[allowed]
            closest[allowed] = self.center + w[allowed] * f[:, None]
        rim = ~allowed
        if rim.any():
            side = np.where(z[rim] >= 0, 1.0, -1.0)
            cx = self.rim_rho * u[rim, 0]
            cy = self.rim_rho * u[rim, 1]
            cz = side * self.gap
            closest[rim] = self.center + np.stack([cx, cy, cz], axis=1)
        return closest

    def udf(self, pts):
        pts = as_points(pts)
        return np.linalg.norm(pts - self._closest(pts), axis=1)

    def nvf(self, pts):
        pts = as_points(pts)
        return (self._closest(pts) - self.center) / self.radius


class SoupBruteField(Field):
    """Exact distance/normal field of a triangle soup via exhaustive search.

    The ideal field the training targets approximate; quadratic cost, meant
    for oracle-grade evaluation on small soups.
    """

    def __init__(self, soup: TriangleSoup):
        self.soup = soup

    def udf(self, pts):
        dist, _, _ = soup_nearest(self.soup, as_points(pts))
        return dist

    def nvf(self, pts):
        _, _, tri_idx = soup_nearest(self.soup, as_points(pts))
        return self.soup.normals[tri_idx].copy()


class EvalCounter(Field):
    """Wrapper counting per-point field evaluations (for budget checks)."""

    def __init__(self, inner: Field):
        self.inner = inner
        self.udf_evals = 0
        self.nvf_evals = 0

    def udf(self, pts):
        pts = as_points(pts)
        self.udf_evals += len(pts)
        return self.inner.udf(pts)

    def nvf(self, pts):
        pts = as_points(pts)
        self.nvf_evals += len(pts)
        return self.inner.nvf(pts)

    def reset(self):
        self.udf_evals = 0
        self.nvf_evals = 0
