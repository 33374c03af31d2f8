"""Sphere tracing of unsigned distance fields from a pinhole camera.

Marching steps by the field value until it drops below eps; an unsigned
field never changes sign at the surface, so the stop point sits a biased
eps-distance short of it. Three terminal strategies are provided:

- standard:   keep the stop point as the hit;
- resample:   probe the field at `resample_k` points along the ray within
              +-resample_window of the stop point, keep the argmin;
- projection: one corrective step uDF(p)/|r.n| along the ray using the
              normal field, exact on locally planar surfaces. The cosine is
              taken in absolute value (normals are unoriented) and guarded
              by min_cos at grazing incidence, falling back to standard.

A ray misses when it exits the padded scene box or hits the iteration cap.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DataError, SoupParseError
from .field import Field
from .geometry import normalized

#: Half-extent of the tracing region; rays outside are advanced to the
#: entry point, and marching beyond it is a miss.
BOX_HALF = 0.7

_BOX_TOL = 1e-9

DEPTH_MAGIC = b"DUDEDEPTHv1\x00"


@dataclass
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 0.0, 1.0)
    vfov: float = np.deg2rad(45.0)
    width: int = 128
    height: int = 128

    def __post_init__(self):
        if not (0.0 < self.vfov < np.pi):
            raise DataError("vertical FOV must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise DataError("image dimensions must be >= 1")
        if np.allclose(self.position, self.look_at):
            raise DataError("camera position equals look_at")


@dataclass
class TraceConfig:
    strategy: str = "standard"
    eps: float = 1e-3
    max_iters: int = 200
    resample_k: int = 100
    resample_window: float = 0.01
    min_cos: float = 0.1

    def __post_init__(self):
        if self.strategy not in ("standard", "resample", "projection"):
            raise DataError(f"unknown strategy {self.strategy!r}")
        if self.eps <= 0 or self.resample_window <= 0:
            raise DataError("eps and resample_window must be positive")
        if self.max_iters < 1 or self.resample_k < 1:
            raise DataError("max_iters and resample_k must be >= 1")


@dataclass
class TraceResult:
    """Per-ray tracing outcome (arrays over the ray batch)."""

    hit: np.ndarray        # bool
    t: np.ndarray          # ray parameter of the final point
    points: np.ndarray     # final points (N, 3)
    iters: np.ndarray      # distance-field evaluations in the marching phase
    residual: np.ndarray   # field value at the final point
    normal_ok: np.ndarray  # False where the normal net was degenerate


@dataclass
class RenderProduct:
    depth: np.ndarray       # (H, W) float64, +inf at misses
    normals: np.ndarray     # (H, W, 3), zeros at misses
    iterations: np.ndarray  # (H, W) int32
    flags: np.ndarray       # (H, W) uint8, bit 0 = degenerate normal fallback
    config: TraceConfig = dc_field(default_factory=TraceConfig)


def make_rays(cam: Camera):
    """Pixel-center pinhole rays; returns (origins (H,W,3), dirs (H,W,3)).

    The ray through the image center points along normalize(look_at - position).
    """
    pos = np.asarray(cam.position, dtype=np.float64)
    fwd = normalized(np.asarray(cam.look_at, dtype=np.float64) - pos)
    up = np.asarray(cam.up, dtype=np.float64)
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        raise DataError("camera up vector is parallel to the view direction")
    right /= nr
    true_up = np.cross(right, fwd)

    tan_v = np.tan(cam.vfov / 2.0)
    tan_h = tan_v * cam.width / cam.height
    xs = (np.arange(cam.width) + 0.5) / cam.width * 2.0 - 1.0
    ys = 1.0 - (np.arange(cam.height) + 0.5) / cam.height * 2.0
    px, py = np.meshgrid(xs, ys)

    dirs = (fwd[None, None, :]
            + px[..., None] * tan_h * right[None, None, :]
            + py[..., None] * tan_v * true_up[None, None, :])
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    origins = np.broadcast_to(pos, dirs.shape).copy()
    return origins, dirs


def _box_range(origins, dirs, half=BOX_HALF):
    """Slab intersection with the padded box: (t_enter, t_exit) per ray."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (-half - origins) * inv
        t1 = (half - origins) * inv
    lo = np.fmin(t0, t1)
    hi = np.fmax(t0, t1)
    # Rays parallel to a slab: inside contributes (-inf, +inf), outside is empty.
    par = dirs == 0.0
    if par.any():
        inside = np.abs(origins) <= half
        lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    return lo.max(axis=1), hi.min(axis=1)


def _march(field: Field, origins, dirs, cfg: TraceConfig):
    """Shared marching phase; returns (hit, t, iters, residual)."""
    n = len(origins)
    t_enter, t_exit = _box_range(origins, dirs)
    entered = (t_enter <= t_exit) & (t_exit >= 0.0)
    t = np.where(entered, np.maximum(t_enter, 0.0), 0.0)

    alive = entered.copy()
    hit = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=np.int32)
    residual = np.zeros(n, dtype=np.float64)

    while alive.any():
        idx = np.nonzero(alive)[0]
        p = origins[idx] + t[idx, None] * dirs[idx]
        d = field.udf(p)
        iters[idx] += 1

        close = d <= cfg.eps
        hidx = idx[close]
        hit[hidx] = True
        residual[hidx] = d[close]
        alive[hidx] = False

        aidx = idx[~close]
        t[aidx] += d[~close]
        p_next = origins[aidx] + t[aidx, None] * dirs[aidx]
        out = (np.abs(p_next) > BOX_HALF + _BOX_TOL).any(axis=1)
        alive[aidx[out]] = False
        capped = iters[aidx] >= cfg.max_iters
        alive[aidx[capped]] = False
    return hit, t, iters, residual


def trace_batch(field: Field, origins, dirs, cfg: TraceConfig) -> TraceResult:
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    hit, t, iters, residual = _march(field, origins, dirs, cfg)
    normal_ok = np.ones(len(origins), dtype=bool)

    hidx = np.nonzero(hit)[0]
    if len(hidx) and cfg.strategy == "resample":
        # Probe exactly resample_k points per hit ray; lambda grid clipped so
        # candidates stay inside the padded box.
        k = cfg.resample_k
        w = cfg.resample_window
        lam = np.linspace(-w, w, k) if k > 1 else np.zeros(1)
        ho, hd, ht = origins[hidx], dirs[hidx], t[hidx]
        t_enter, t_exit = _box_range(ho, hd)
        lam_lo = np.maximum(-w, t_enter - ht)
        lam_hi = np.minimum(w, t_exit - ht)
        cand_lam = np.clip(lam[None, :], lam_lo[:, None], lam_hi[:, None])
        cand_t = ht[:, None] + cand_lam
        cand_p = ho[:, None, :] + cand_t[..., None] * hd[:, None, :]
        vals = field.udf(cand_p.reshape(-1, 3)).reshape(len(hidx), k)
        best = np.argmin(vals, axis=1)  # ties: lowest lambda index
        rows = np.arange(len(hidx))
        t[hidx] = cand_t[rows, best]
        residual[hidx] = vals[rows, best]
    elif len(hidx) and cfg.strategy == "projection":
        # p_proj = p + r * uDF(p) / |r.n|; the absolute cosine because the
        # normal field is unoriented, guarded at grazing incidence.
        ho, hd, ht = origins[hidx], dirs[hidx], t[hidx]
        p = ho + ht[:, None] * hd
        normals, ok = field.nvf_masked(p)
        normal_ok[hidx[~ok]] = False
        cosang = np.abs(np.einsum("ij,ij->i", hd, normals))
        advance = ok & (cosang >= cfg.min_cos)
        delta = np.where(advance, residual[hidx] / np.where(advance, cosang, 1.0), 0.0)
        t[hidx] = ht + delta
        p_final = ho + t[hidx, None] * hd
        residual[hidx] = field.udf(p_final)

    points = origins + t[:, None] * dirs
    return TraceResult(hit=hit, t=t, points=points, iters=iters,
                       residual=residual, normal_ok=normal_ok)


@dataclass
class Hit:
    t: float
    point: np.ndarray
    iters: int
    residual: float


def _trace_one(field, origin, direction, cfg) -> Hit | None:
    res = trace_batch(field,
                      np.asarray(origin, dtype=np.float64).reshape(1, 3),
                      np.asarray(direction, dtype=np.float64).reshape(1, 3), cfg)
    if not res.hit[0]:
        return None
    return Hit(t=float(res.t[0]), point=res.points[0], iters=int(res.iters[0]),
               residual=float(res.residual[0]))


def trace_standard(field, origin, direction, cfg: TraceConfig) -> Hit | None:
    cfg = TraceConfig(**{**cfg.__dict__, "strategy": "standard"})
    return _trace_one(field, origin, direction, cfg)


def trace_resample(field, origin, direction, cfg: TraceConfig) -> Hit | None:
    cfg = TraceConfig(**{**cfg.__dict__, "strategy": "resample"})
    return _trace_one(field, origin, direction, cfg)


def trace_projection(field, origin, direction, cfg: TraceConfig) -> Hit | None:
    cfg = TraceConfig(**{**cfg.__dict__, "strategy": "projection"})
    return _trace_one(field, origin, direction, cfg)


def render(field: Field, cam: Camera, cfg: TraceConfig) -> RenderProduct:
    """Per-pixel trace producing depth, normal, iteration and flag grids.

    Depth is the ray parameter t (distance from the camera position), +inf
    at misses; normals come from the normal field at the final hit points.
    """
    origins, dirs = make_rays(cam)
    flat_o = origins.reshape(-1, 3)
    flat_d = dirs.reshape(-1, 3)
    res = trace_batch(field, flat_o, flat_d, cfg)

    h, w = cam.height, cam.width
    depth = np.full(h * w, np.inf)
    depth[res.hit] = res.t[res.hit]
    normals = np.zeros((h * w, 3))
    flags = np.zeros(h * w, dtype=np.uint8)
    flags[~res.normal_ok] |= 1
    hidx = np.nonzero(res.hit)[0]
    if len(hidx):
        nvals, ok = field.nvf_masked(res.points[hidx])
        normals[hidx] = nvals
        flags[hidx[~ok]] |= 1
    return RenderProduct(
        depth=depth.reshape(h, w),
        normals=normals.reshape(h, w, 3),
        iterations=res.iters.reshape(h, w).astype(np.int32),
        flags=flags.reshape(h, w),
        config=cfg,
    )


def fd_normals(field: Field, points, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient directions of the distance field.

    The baseline normal estimator a separately learned normal field is
    compared against; unreliable close to the surface where the unsigned
    field is non-differentiable.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    grad = np.empty_like(points)
    for ax in range(3):
        step = np.zeros(3)
        step[ax] = h
        grad[:, ax] = field.udf(points + step) - field.udf(points - step)
    norms = np.linalg.norm(grad, axis=1)
    out = np.zeros_like(grad)
    out[:, 2] = 1.0  # zero-gradient points get a fixed placeholder
    good = norms > 1e-300
    out[good] = grad[good] / norms[good, None]
    return out


# ---------------------------------------------------------------------------
# Raw grid + PNG output.
# ---------------------------------------------------------------------------

def save_raw_grid(path, grid: np.ndarray) -> None:
    """Raw little-endian float32 grid with a magic + u32 W/H header.

    Accepts (H, W) or (H, W, C) grids; channel count is implied by size.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim not in (2, 3):
        raise DataError("raw grids must be (H, W) or (H, W, C)")
    h, w = grid.shape[:2]
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(grid.astype("<f4").tobytes())


def load_raw_grid(path) -> np.ndarray:
    data = open(path, "rb").read()
    if data[:12] != DEPTH_MAGIC:
        raise SoupParseError("bad raw-grid magic", path=path, offset=0)
    w, h = struct.unpack_from("<II", data, 12)
    payload = np.frombuffer(data, dtype="<f4", offset=20)
    if w * h == 0:
        raise SoupParseError("empty raw grid", path=path, offset=12)
    if payload.size == w * h:
        return payload.reshape(h, w).astype(np.float64)
    if payload.size % (w * h) == 0:
        return payload.reshape(h, w, payload.size // (w * h)).astype(np.float64)
    raise SoupParseError(f"raw grid payload size {payload.size} does not match {w}x{h}",
                         path=path, offset=20)


def save_depth_png(path, depth: np.ndarray) -> None:
    """8-bit preview: finite depths min-max normalized, misses black."""
    from PIL import Image

    finite = np.isfinite(depth)
    img = np.zeros(depth.shape, dtype=np.uint8)
    if finite.any():
        lo = depth[finite].min()
        hi = depth[finite].max()
        span = hi - lo if hi > lo else 1.0
        img[finite] = np.round(255 - (depth[finite] - lo) / span * 254).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def save_normal_png(path, normals: np.ndarray) -> None:
    """8-bit preview with the n*0.5+0.5 channel mapping."""
    from PIL import Image

    rgb = np.round((normals * 0.5 + 0.5) * 255).clip(0, 255).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)
