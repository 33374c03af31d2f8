"""Minimal reverse-mode-differentiable MLP, the two training losses, Adam,
and the loop that fits the distance/normal network pair.

Parameters are float32; loss and other reductions accumulate in float64 so
gradients can be validated against finite differences on float64 copies.
The normal loss is computed modulo 180 degrees: soups carry inconsistently
oriented faces, so the target normal and its negation are equally valid.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, SoupParseError
from .sampler import SampleSet

MODEL_MAGIC = b"DUDEMODELv1\x00"


@dataclass(frozen=True)
class MlpArch:
    """Fully-connected net: `depth` affine layers, ReLU on all but the last."""

    in_dim: int
    hidden_dim: int = 512
    depth: int = 6
    out_dim: int = 1

    def __post_init__(self):
        if self.depth < 2:
            raise DataError("depth must be >= 2 (at least one hidden layer)")
        if min(self.in_dim, self.hidden_dim, self.out_dim) < 1:
            raise DataError("all dimensions must be >= 1")

    @property
    def layer_dims(self):
        return [self.in_dim] + [self.hidden_dim] * (self.depth - 1) + [self.out_dim]


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4096
    epochs: int = 200
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise DataError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DataError("betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataError("bad batch size or epoch count")


@dataclass
class FieldModel:
    """Trained distance/normal network pair plus scene normalization."""

    udf_arch: MlpArch
    udf_params: list
    nvf_arch: MlpArch
    nvf_params: list
    scale: float = 1.0
    offset: tuple = (0.0, 0.0, 0.0)
    sample_digest: bytes = b"\x00" * 32
    history: dict = dc_field(default_factory=dict)


def init_mlp(arch: MlpArch, seed: int) -> list:
    """He-uniform weights (bound sqrt(6/fan_in)), zero biases, float32."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(np.float32)
        b = np.zeros(fan_out, dtype=np.float32)
        params.append((w, b))
    return params


def forward(params: list, xs: np.ndarray):
    """Batch forward pass; returns (outputs (B, out), tape for backward)."""
    dtype = params[0][0].dtype
    xs = np.asarray(xs, dtype=dtype)
    if xs.ndim == 1:
        xs = xs.reshape(1, -1)
    if not np.isfinite(xs).all():
        raise NumericError("non-finite network input")
    acts = [xs]
    pres = []
    h = xs
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        z = h @ w.T + b
        if i < last:
            pres.append(z)
            h = np.maximum(z, 0)
            acts.append(h)
        else:
            return z, (acts, pres)
    raise AssertionError("unreachable")


def backward(params: list, tape, upstream: np.ndarray) -> list:
    """Exact reverse-mode gradients of sum(upstream * outputs).

    ReLU subgradient at 0 is 0. Returns [(dW, db), ...] shaped like params.
    """
    acts, pres = tape
    g = np.asarray(upstream, dtype=params[0][0].dtype)
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        grads[i] = (g.T @ acts[i], g.sum(axis=0))
        if i > 0:
            g = (g @ w) * (pres[i - 1] > 0)
    return grads


# ---------------------------------------------------------------------------
# Losses (batch-mean reductions in float64).
# ---------------------------------------------------------------------------

def loss_udf(pred: np.ndarray, d: np.ndarray) -> float:
    """Mean L2 norm of the scalar distance residual, i.e. mean |pred - d|."""
    res = np.asarray(pred).reshape(-1) - np.asarray(d).reshape(-1)
    return float(np.abs(res).mean(dtype=np.float64))


def loss_udf_grad(pred: np.ndarray, d: np.ndarray):
    res = pred.reshape(-1) - np.asarray(d, dtype=pred.dtype).reshape(-1)
    loss = float(np.abs(res).mean(dtype=np.float64))
    dpred = (np.sign(res) / len(res)).astype(pred.dtype).reshape(pred.shape)
    return loss, dpred


def loss_nvf(pred: np.ndarray, v: np.ndarray) -> float:
    """Orientation-agnostic normal loss: mean of min(|p - v|, |p + v|)."""
    pred = np.asarray(pred).reshape(-1, 3)
    v = np.asarray(v, dtype=pred.dtype).reshape(-1, 3)
    r1 = np.linalg.norm(pred - v, axis=1)
    r2 = np.linalg.norm(pred + v, axis=1)
    return float(np.minimum(r1, r2).mean(dtype=np.float64))


def loss_nvf_grad(pred: np.ndarray, v: np.ndarray):
    v = np.asarray(v, dtype=pred.dtype).reshape(pred.shape)
    diff = pred - v
    summ = pred + v
    r1 = np.linalg.norm(diff, axis=1)
    r2 = np.linalg.norm(summ, axis=1)
    first = r1 <= r2  # the tie takes the first branch
    r = np.where(first, r1, r2)
    loss = float(r.mean(dtype=np.float64))
    u = np.where(first[:, None], diff, summ)
    denom = np.where(r > 0, r, 1.0)[:, None] * len(r)
    dpred = np.where(r[:, None] > 0, u / denom, 0.0).astype(pred.dtype)
    return loss, dpred


# ---------------------------------------------------------------------------
# Optimizer.
# ---------------------------------------------------------------------------

def init_adam(params: list) -> AdamState:
    return AdamState(
        m=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params],
        v=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params],
        t=0,
    )


def adam_step(params: list, grads: list, state: AdamState, cfg: TrainConfig):
    """Standard bias-corrected Adam update, in place; returns (params, state)."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (w, b) in enumerate(params):
        for j, (p, g) in enumerate(((w, grads[i][0]), (b, grads[i][1]))):
            m = state.m[i][j]
            v = state.v[i][j]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


# ---------------------------------------------------------------------------
# Training loop.
# ---------------------------------------------------------------------------

def _eval_loss(params, xs, target, loss_fn, batch_size):
    total = 0.0
    n = len(xs)
    for s in range(0, n, batch_size):
        y, _ = forward(params, xs[s:s + batch_size])
        total += loss_fn(y, target[s:s + batch_size]) * (min(s + batch_size, n) - s)
    return total / n


def _copy_params(params):
    return [(w.copy(), b.copy()) for w, b in params]


def _train_single(name, xs, target, val_xs, val_target, arch, cfg,
                  init_seed, shuffle_seed, loss_fn, loss_grad_fn, callback=None):
    params = init_mlp(arch, init_seed)
    history = {"epoch": [], "train_loss": [], "val_loss": [], "step_loss": []}
    if cfg.epochs == 0:
        return params, history

    state = init_adam(params)
    rng = np.random.default_rng(shuffle_seed)
    n = len(xs)
    best_val = np.inf
    best_params = _copy_params(params)
    have_val = len(val_xs) > 0

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_sum = 0.0
        for s in range(0, n, cfg.batch_size):
            sel = perm[s:s + cfg.batch_size]
            y, tape = forward(params, xs[sel])
            loss, dy = loss_grad_fn(y, target[sel])
            if not np.isfinite(loss):
                raise NumericError(
                    f"{name}: non-finite loss {loss} at epoch {epoch}, step offset {s}")
            grads = backward(params, tape, dy)
            adam_step(params, grads, state, cfg)
            history["step_loss"].append(loss)
            epoch_sum += loss * len(sel)
        train_loss = epoch_sum / n
        if have_val:
            val_loss = _eval_loss(params, val_xs, val_target, loss_fn, cfg.batch_size)
        else:
            val_loss = train_loss
        history["epoch"].append(epoch)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = _copy_params(params)
        if callback is not None and cfg.checkpoint_every > 0 \
                and (epoch + 1) % cfg.checkpoint_every == 0:
            callback(name, epoch, params)
    return best_params, history


def train_fields(samples: SampleSet, cfg: TrainConfig,
                 udf_arch: MlpArch | None = None, nvf_arch: MlpArch | None = None,
                 scale: float = 1.0, offset=(0.0, 0.0, 0.0), callback=None) -> FieldModel:
    """Fit the distance net (3->1) and normal net (3->3) on a sample set.

    The two nets are trained independently on the same pooled data; the
    checkpoint kept for each is the one with the best validation loss.
    Deterministic for fixed (samples, cfg). callback(net, epoch, params) is
    invoked every cfg.checkpoint_every epochs when set.
    """
    if samples.n_train == 0:
        raise DataError("empty training split")
    udf_arch = udf_arch or MlpArch(in_dim=3, out_dim=1)
    nvf_arch = nvf_arch or MlpArch(in_dim=3, out_dim=3)

    xs = samples.train_queries
    vxs = samples.val_queries
    udf_params, udf_hist = _train_single(
        "udf", xs, samples.train_dists, vxs, samples.val_dists,
        udf_arch, cfg, cfg.seed, cfg.seed + 2, loss_udf, loss_udf_grad, callback)
    nvf_params, nvf_hist = _train_single(
        "nvf", xs, samples.train_normals, vxs, samples.val_normals,
        nvf_arch, cfg, cfg.seed + 1, cfg.seed + 3, loss_nvf, loss_nvf_grad, callback)

    return FieldModel(
        udf_arch=udf_arch, udf_params=udf_params,
        nvf_arch=nvf_arch, nvf_params=nvf_params,
        scale=float(scale), offset=tuple(float(c) for c in offset),
        sample_digest=samples.source_digest,
        history={"udf": udf_hist, "nvf": nvf_hist},
    )


# ---------------------------------------------------------------------------
# Checkpoint I/O: one weight file per net plus a JSON manifest carrying the
# normalization and sample-set digest.
# ---------------------------------------------------------------------------

def _write_net(path, arch: MlpArch, params: list) -> None:
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<IIII", arch.in_dim, arch.hidden_dim, arch.depth, arch.out_dim))
        for w, b in params:
            f.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def _read_net(path):
    data = open(path, "rb").read()
    if data[:12] != MODEL_MAGIC:
        raise SoupParseError("bad model magic", path=path, offset=0)
    in_dim, hidden, depth, out_dim = struct.unpack_from("<IIII", data, 12)
    arch = MlpArch(in_dim=in_dim, hidden_dim=hidden, depth=depth, out_dim=out_dim)
    off = 28
    params = []
    for fan_in, fan_out in zip(arch.layer_dims[:-1], arch.layer_dims[1:]):
        w_n = fan_out * fan_in
        w = np.frombuffer(data, dtype="<f4", count=w_n, offset=off).reshape(fan_out, fan_in).copy()
        off += 4 * w_n
        b = np.frombuffer(data, dtype="<f4", count=fan_out, offset=off).copy()
        off += 4 * fan_out
        params.append((w, b))
    if off != len(data):
        raise SoupParseError(f"model file size mismatch ({len(data)} != {off})", path=path, offset=off)
    return arch, params


def save_checkpoint(model: FieldModel, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_net(out_dir / "udf.bin", model.udf_arch, model.udf_params)
    _write_net(out_dir / "nvf.bin", model.nvf_arch, model.nvf_params)
    manifest = {
        "format": "DUDEMODELv1",
        "udf": "udf.bin",
        "nvf": "nvf.bin",
        "scale": model.scale,
        "offset": list(model.offset),
        "sample_digest": model.sample_digest.hex(),
    }
    with open(out_dir / "model.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(model_dir) -> FieldModel:
    model_dir = Path(model_dir)
    manifest_path = model_dir / "model.json"
    if not manifest_path.exists():
        raise DataError(f"no model manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    udf_arch, udf_params = _read_net(model_dir / manifest["udf"])
    nvf_arch, nvf_params = _read_net(model_dir / manifest["nvf"])
    return FieldModel(
        udf_arch=udf_arch, udf_params=udf_params,
        nvf_arch=nvf_arch, nvf_params=nvf_params,
        scale=float(manifest["scale"]), offset=tuple(manifest["offset"]),
        sample_digest=bytes.fromhex(manifest["sample_digest"]),
    )
