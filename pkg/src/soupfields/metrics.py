"""Quantitative evaluation of renders and meshes.

Depth and normal errors are averaged over "valid" pixels: pixels with
finite depth in both the ground-truth and estimated maps. Pixel IOU counts
mutually-finite pixels against pixels finite in exactly one map (pixels
finite in neither are excluded entirely). Normal comparisons are modulo
180 degrees, consistent with the unoriented normal representation.

Chamfer distance uses squared point distances and the sum-of-means
convention: mean over A of squared NN distance to B, plus the reverse.
Reported magnitudes are convention-dependent; numbers from other sources
are only comparable after checking which convention they use.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .geometry import NnIndex, TriangleSoup
from .mesher import Mesh
from .sampler import sample_surface


def _check_dims(gt: np.ndarray, est: np.ndarray):
    if gt.shape != est.shape:
        raise DataError(f"map dimensions differ: {gt.shape} vs {est.shape}")


def valid_mask(gt_depth: np.ndarray, est_depth: np.ndarray) -> np.ndarray:
    """Pixels with finite depth in both maps."""
    _check_dims(gt_depth, est_depth)
    return np.isfinite(gt_depth) & np.isfinite(est_depth)


def depth_mae(gt: np.ndarray, est: np.ndarray) -> float:
    """Mean absolute depth difference over valid pixels."""
    valid = valid_mask(gt, est)
    if not valid.any():
        raise DataError("no valid pixels: the finite regions do not overlap")
    return float(np.abs(gt[valid] - est[valid]).mean(dtype=np.float64))


def normal_error(gt: np.ndarray, est: np.ndarray, valid: np.ndarray) -> float:
    """Mean per-pixel min(|n_est - n_gt|, |n_est + n_gt|) over valid pixels."""
    if gt.shape != est.shape or gt.shape[:-1] != valid.shape or gt.shape[-1] != 3:
        raise DataError("normal map shapes inconsistent")
    if not valid.any():
        raise DataError("no valid pixels for normal comparison")
    a = gt[valid]
    b = est[valid]
    d1 = np.linalg.norm(b - a, axis=1)
    d2 = np.linalg.norm(b + a, axis=1)
    return float(np.minimum(d1, d2).mean(dtype=np.float64))


def pixel_iou(gt: np.ndarray, est: np.ndarray) -> float:
    """Valid / (valid + invalid) where invalid = finite in exactly one map.

    Equals 1 iff the finite masks coincide (including the both-empty case).
    """
    _check_dims(gt, est)
    fg = np.isfinite(gt)
    fe = np.isfinite(est)
    n_valid = int((fg & fe).sum())
    n_invalid = int((fg ^ fe).sum())
    if n_valid + n_invalid == 0:
        return 1.0
    return n_valid / (n_valid + n_invalid)


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric squared chamfer distance between two point sets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise DataError("chamfer distance of an empty point set")
    _, d2_ab = NnIndex(b).query2(a)
    _, d2_ba = NnIndex(a).query2(b)
    return float(np.mean(d2_ab, dtype=np.float64) + np.mean(d2_ba, dtype=np.float64))


def sample_mesh_points(mesh: Mesh, n: int, seed: int) -> np.ndarray:
    """Area-weighted surface samples of a mesh, for chamfer evaluation."""
    if len(mesh.faces) == 0:
        raise DataError("cannot sample an empty mesh")
    soup = TriangleSoup(mesh.vertices[mesh.faces])
    return sample_surface(soup, n, seed).positions


def write_report(path, entries: dict) -> None:
    """Flat key/value JSON report; values must be scalars or strings."""
    flat = {}
    for key, value in entries.items():
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        if not isinstance(value, (int, float, str, bool)):
            raise DataError(f"report value for {key!r} is not a flat scalar")
        flat[str(key)] = value
    with open(path, "w") as f:
        json.dump(flat, f, indent=2, sort_keys=True)
        f.write("\n")


def read_report(path) -> dict:
    return json.loads(open(path).read())
