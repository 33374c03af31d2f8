"""Training-set construction from a normalized triangle soup.

Recipe: densely sample oriented points on the faces (area-weighted), emit
two Gaussian-perturbed queries per surface point plus a batch of uniform
box samples, then label every query with the exact distance to (and normal
of) its nearest surface sample. Queries are never taken on the surface
itself: the distance field is non-differentiable there, so near-zero
distances are dropped rather than clamped.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SoupParseError
from .geometry import NnIndex, TriangleSoup

#: Isotropic perturbation sigmas applied to every surface sample (one query
#: each): variances 0.0025 and 0.00025.
PERTURB_SIGMAS = (0.05, float(np.sqrt(0.00025)))

#: Half-extent of the uniform sampling box, slightly padded beyond the
#: normalized shape bbox so rays enter through supervised space.
UNIFORM_HALF_EXTENT = 0.6

#: Queries closer than this to a surface sample are discarded.
MIN_QUERY_DIST = 1e-7

VAL_FRACTION = 0.10

SAMPLE_SET_MAGIC = b"DUDESAMPLESETv1\x00"


@dataclass
class SurfaceSamples:
    """Oriented point set sampled from soup faces."""

    positions: np.ndarray  # (N, 3) float64
    normals: np.ndarray    # (N, 3) float64, per-sample face normal

    def __len__(self):
        return len(self.positions)


@dataclass
class SampleSet:
    """Labeled training data: (query, distance, normal) triples, split 90/10.

    Arrays are float32, the on-disk precision.
    """

    train_queries: np.ndarray
    train_dists: np.ndarray
    train_normals: np.ndarray
    val_queries: np.ndarray
    val_dists: np.ndarray
    val_normals: np.ndarray
    rng_seed: int
    source_digest: bytes

    @property
    def n_train(self):
        return len(self.train_queries)

    @property
    def n_val(self):
        return len(self.val_queries)


def sample_surface(soup: TriangleSoup, n: int, seed: int) -> SurfaceSamples:
    """Draw n points uniformly by area over the soup faces.

    Triangles are chosen with probability proportional to area; the point is
    uniform on the face via the (1-sqrt(u), sqrt(u)(1-v), sqrt(u)v)
    barycentric map. Deterministic per seed.
    """
    if n < 1:
        raise DataError("need at least one surface sample")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(soup.areas)
    cum /= cum[-1]
    tri_idx = np.searchsorted(cum, rng.random(n), side="right")
    tri_idx = np.minimum(tri_idx, len(soup) - 1)

    u = rng.random(n)
    v = rng.random(n)
    su = np.sqrt(u)
    b0 = 1.0 - su
    b1 = su * (1.0 - v)
    b2 = su * v
    tris = soup.tris[tri_idx]
    positions = (b0[:, None] * tris[:, 0] + b1[:, None] * tris[:, 1] + b2[:, None] * tris[:, 2])
    return SurfaceSamples(positions=positions, normals=soup.normals[tri_idx].copy())


def perturb_queries(samples: SurfaceSamples, seed: int, sigmas=PERTURB_SIGMAS) -> np.ndarray:
    """Two Gaussian-offset queries per surface sample, one per sigma.

    Output is the sigma-major concatenation: all sigma[0] offsets, then all
    sigma[1] offsets; length 2*len(samples).
    """
    if len(samples) == 0:
        raise DataError("no surface samples to perturb")
    rng = np.random.default_rng(seed)
    blocks = []
    for sigma in sigmas:
        noise = rng.standard_normal((len(samples), 3))
        blocks.append(samples.positions + sigma * noise)
    return np.concatenate(blocks, axis=0)


def sample_uniform_box(n: int, seed: int, half_extent: float = UNIFORM_HALF_EXTENT) -> np.ndarray:
    """n i.i.d. uniform points in [-half_extent, half_extent]^3."""
    if n < 0:
        raise DataError("negative sample count")
    rng = np.random.default_rng(seed)
    return rng.uniform(-half_extent, half_extent, size=(n, 3))


def build_training_set(queries: np.ndarray, samples: SurfaceSamples, split_seed: int,
                       source_digest: bytes = b"\x00" * 32) -> SampleSet:
    """Label queries with exact nearest-sample distance and normal, then split.

    Ties go to the lowest sample index. Queries within MIN_QUERY_DIST of a
    sample are dropped. The pool is shuffled with split_seed before the
    90/10 train/val split.
    """
    if len(samples) == 0:
        raise DataError("empty surface sample set")
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    index = NnIndex(samples.positions, samples.normals)
    idx, dist = index.query(queries)

    keep = dist >= MIN_QUERY_DIST
    queries = queries[keep]
    dist = dist[keep]
    normals = samples.normals[idx[keep]]
    total = len(queries)
    if total == 0:
        raise DataError("all queries fell on the surface; nothing to train on")

    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(total)
    n_val = int(round(VAL_FRACTION * total))
    val_sel = perm[:n_val]
    train_sel = perm[n_val:]

    def pack(sel):
        return (queries[sel].astype(np.float32),
                dist[sel].astype(np.float32),
                normals[sel].astype(np.float32))

    tq, td, tn = pack(train_sel)
    vq, vd, vn = pack(val_sel)
    return SampleSet(tq, td, tn, vq, vd, vn, rng_seed=int(split_seed),
                     source_digest=bytes(source_digest))


def make_sample_set(soup: TriangleSoup, n_surface: int, n_uniform: int, seed: int) -> SampleSet:
    """Full pipeline: surface sampling, perturbation, uniform fill, labeling.

    Sub-seeds are derived as seed, seed+1, seed+2, seed+3 for the four
    stages, keeping the whole set reproducible from one integer.
    """
    surface = sample_surface(soup, n_surface, seed)
    perturbed = perturb_queries(surface, seed + 1)
    uniform = sample_uniform_box(n_uniform, seed + 2)
    pool = np.concatenate([perturbed, uniform], axis=0) if n_uniform else perturbed
    ss = build_training_set(pool, surface, seed + 3, source_digest=soup.digest())
    ss.rng_seed = int(seed)
    return ss


# ---------------------------------------------------------------------------
# Serialization: 16-byte magic, u64 train/val counts, packed float32
# (x, y, z, d, nx, ny, nz) records train-then-val, u64 seed, 32-byte digest.
# ---------------------------------------------------------------------------

def _records(queries, dists, normals) -> np.ndarray:
    rec = np.empty((len(queries), 7), dtype="<f4")
    rec[:, 0:3] = queries
    rec[:, 3] = dists
    rec[:, 4:7] = normals
    return rec


def save_sample_set(ss: SampleSet, path) -> None:
    with open(path, "wb") as f:
        f.write(SAMPLE_SET_MAGIC)
        f.write(struct.pack("<QQ", ss.n_train, ss.n_val))
        f.write(_records(ss.train_queries, ss.train_dists, ss.train_normals).tobytes())
        f.write(_records(ss.val_queries, ss.val_dists, ss.val_normals).tobytes())
        f.write(struct.pack("<Q", ss.rng_seed & 0xFFFFFFFFFFFFFFFF))
        digest = ss.source_digest
        if len(digest) != 32:
            raise DataError("source digest must be 32 bytes")
        f.write(digest)


def load_sample_set(path) -> SampleSet:
    data = open(path, "rb").read()
    if data[:16] != SAMPLE_SET_MAGIC:
        raise SoupParseError("bad sample-set magic", path=path, offset=0)
    if len(data) < 16 + 16 + 8 + 32:
        raise SoupParseError("truncated sample-set file", path=path, offset=len(data))
    n_train, n_val = struct.unpack_from("<QQ", data, 16)
    body = 32
    rec_bytes = 7 * 4
    expected = body + (n_train + n_val) * rec_bytes + 8 + 32
    if len(data) != expected:
        raise SoupParseError(
            f"sample-set size mismatch: have {len(data)}, expected {expected}",
            path=path, offset=len(data))

    def unpack(offset, count):
        rec = np.frombuffer(data, dtype="<f4", count=count * 7, offset=offset).reshape(count, 7)
        return rec[:, 0:3].copy(), rec[:, 3].copy(), rec[:, 4:7].copy()

    tq, td, tn = unpack(body, n_train)
    vq, vd, vn = unpack(body + n_train * rec_bytes, n_val)
    tail = body + (n_train + n_val) * rec_bytes
    (seed,) = struct.unpack_from("<Q", data, tail)
    digest = data[tail + 8: tail + 40]
    return SampleSet(tq, td, tn, vq, vd, vn, rng_seed=int(seed), source_digest=digest)
