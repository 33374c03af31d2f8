"""Subcommand CLI orchestrating the pipeline end to end.

    soupfields synth   --out shape.obj
    soupfields sample  --soup shape.obj --out shape.samples
    soupfields train   --samples shape.samples --out model_dir
    soupfields render  --model model_dir --out view [--strategy projection]
    soupfields extract --model model_dir --out mesh.ply
    soupfields eval    --gt-depth a.raw --est-depth b.raw --out report.json

Every command reads an optional flat key/value config file (--config) with
--set key=value overrides, echoes the resolved configuration, and writes a
manifest next to each artifact recording the configuration and the SHA-256
digests of its inputs. Seeds default to fixed constants, so reruns with the
same configuration are bit-identical. Exit codes: 0 ok, 1 usage, 2 data
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, _parallel
from .errors import DataError, NumericError
from .field import Field, NeuralField, PlaneField, SphereField, SplitSphereField
from .geometry import normalize_soup
from .mesher import extract_mesh
from .metrics import (chamfer, depth_mae, normal_error, pixel_iou,
                      sample_mesh_points, valid_mask, write_report)
from .mlp import MlpArch, TrainConfig, load_checkpoint, save_checkpoint, train_fields
from .sampler import load_sample_set, make_sample_set, save_sample_set
from .shapes import bathtub_mesh, intersecting_planes_mesh, split_sphere_mesh
from .soup_io import load_soup, save_mesh
from .tracer import (Camera, TraceConfig, load_raw_grid, render,
                     save_depth_png, save_normal_png, save_raw_grid)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_VEC3 = tuple  # config values parsed as comma-separated float triples

#: All recognized configuration keys with their defaults. Unknown keys are
#: rejected. Sampler counts default to the full-scale recipe.
CONFIG_DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "surface_samples": 250000,
    "uniform_samples": 25000,
    "train.lr": 1e-4,
    "train.batch_size": 4096,
    "train.epochs": 200,
    "train.hidden": 512,
    "train.depth": 6,
    "train.checkpoint_every": 0,
    "trace.strategy": "standard",
    "trace.eps": 1e-3,
    "trace.max_iters": 200,
    "trace.resample_k": 100,
    "trace.resample_window": 0.01,
    "trace.min_cos": 0.1,
    "mesh.initial_res": 16,
    "mesh.levels": 3,
    "mesh.tau": 0.0,  # 0 means the default: half the final voxel edge
    "cam.position": (0.0, -1.1, 0.25),
    "cam.look_at": (0.0, 0.0, 0.0),
    "cam.up": (0.0, 0.0, 1.0),
    "cam.vfov_deg": 45.0,
    "cam.width": 128,
    "cam.height": 128,
    "synth.shape": "split_sphere",
    "synth.radius": 0.5,
    "synth.gap": 0.1,
    "synth.planes": 3,
    "synth.rings": 24,
    "synth.segments": 48,
    "analytic.shape": "split_sphere",
    "analytic.radius": 0.5,
    "analytic.gap": 0.1,
}


def _parse_value(key: str, raw: str):
    default = CONFIG_DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [float(tok) for tok in raw.split(",")]
            if len(parts) != 3:
                raise ValueError("expected three comma-separated numbers")
            return tuple(parts)
        return raw
    except ValueError as exc:
        raise DataError(f"config key {key!r}: cannot parse {raw!r} ({exc})") from exc


def load_config(config_path=None, overrides=()) -> dict:
    """Resolve configuration from defaults, an optional file, and overrides.

    File format: one `key = value` per line, '#' comments. Unknown keys are
    rejected rather than ignored.
    """
    cfg = dict(CONFIG_DEFAULTS)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        for line_no, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise DataError(f"{path}:{line_no}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in CONFIG_DEFAULTS:
                raise DataError(f"{path}:{line_no}: unknown config key {key!r}")
            cfg[key] = _parse_value(key, raw)
    for item in overrides:
        if "=" not in item:
            raise DataError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise DataError(f"unknown config key {key!r}")
        cfg[key] = _parse_value(key, raw)
    return cfg


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(cfg: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(cfg.items())}


def write_manifest(artifact_path, cfg: dict, inputs: dict, extra: dict | None = None) -> None:
    manifest = {
        "artifact": Path(artifact_path).name,
        "package": f"soupfields {__version__}",
        "config": _jsonable(cfg),
        "inputs": {name: {"path": str(p), "sha256": _digest_file(p)}
                   for name, p in inputs.items()},
    }
    if extra:
        manifest.update(extra)
    out = Path(str(artifact_path) + ".manifest.json")
    with open(out, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _echo_config(cfg: dict, keys_prefixes) -> None:
    for key in sorted(cfg):
        if any(key == p or key.startswith(p) for p in keys_prefixes):
            print(f"  {key} = {cfg[key]}")


def _camera(cfg: dict) -> Camera:
    return Camera(position=cfg["cam.position"], look_at=cfg["cam.look_at"],
                  up=cfg["cam.up"], vfov=np.deg2rad(cfg["cam.vfov_deg"]),
                  width=cfg["cam.width"], height=cfg["cam.height"])


def _trace_config(cfg: dict, strategy=None) -> TraceConfig:
    return TraceConfig(strategy=strategy or cfg["trace.strategy"],
                       eps=cfg["trace.eps"], max_iters=cfg["trace.max_iters"],
                       resample_k=cfg["trace.resample_k"],
                       resample_window=cfg["trace.resample_window"],
                       min_cos=cfg["trace.min_cos"])


def analytic_field(cfg: dict) -> Field:
    shape = cfg["analytic.shape"]
    if shape == "sphere":
        return SphereField((0.0, 0.0, 0.0), cfg["analytic.radius"])
    if shape == "split_sphere":
        return SplitSphereField((0.0, 0.0, 0.0), cfg["analytic.radius"], cfg["analytic.gap"])
    if shape == "plane":
        return PlaneField((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    raise DataError(f"unknown analytic shape {shape!r}")


def _resolve_field(args, cfg) -> tuple[Field, dict]:
    if args.analytic:
        sub = dict(cfg)
        sub["analytic.shape"] = args.analytic
        return analytic_field(sub), {}
    if not args.model:
        raise DataError("either --model or --analytic is required")
    model = load_checkpoint(args.model)
    return NeuralField(model), {"model": Path(args.model) / "model.json"}


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_config(args.config, args.set or ())
    shape = cfg["synth.shape"]
    if shape in ("sphere", "split_sphere"):
        gap = 0.0 if shape == "sphere" else cfg["synth.gap"]
        verts, faces = split_sphere_mesh(cfg["synth.radius"], gap,
                                         cfg["synth.rings"], cfg["synth.segments"])
    elif shape == "planes":
        verts, faces = intersecting_planes_mesh(cfg["synth.planes"])
    elif shape == "bathtub":
        verts, faces = bathtub_mesh()
    else:
        raise DataError(f"unknown synth shape {shape!r}")
    # Emit exactly normalized coordinates so re-normalization is the identity.
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    longest = float((hi - lo).max())
    if longest <= 0:
        raise DataError("synth produced a zero-extent shape")
    scale = 1.0 / longest
    verts = verts * scale - (lo + hi) / 2.0 * scale
    save_mesh(verts, faces, args.out)
    write_manifest(args.out, cfg, {}, {"triangles": len(faces)})
    print(f"synth: {shape} -> {args.out} ({len(faces)} triangles)")
    _echo_config(cfg, ["synth."])
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = load_config(args.config, args.set or ())
    _parallel.set_threads(cfg["threads"])
    soup = load_soup(args.soup)
    soup, scale, offset = normalize_soup(soup)
    ss = make_sample_set(soup, cfg["surface_samples"], cfg["uniform_samples"], cfg["seed"])
    save_sample_set(ss, args.out)
    write_manifest(args.out, cfg, {"soup": args.soup},
                   {"normalization": {"scale": scale, "offset": list(offset)},
                    "n_train": ss.n_train, "n_val": ss.n_val})
    print(f"sample: {ss.n_train} train / {ss.n_val} val -> {args.out}")
    dists = np.concatenate([ss.train_dists, ss.val_dists])
    counts, edges = np.histogram(dists, bins=10)
    print("distance histogram:")
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        print(f"  [{lo:.4f}, {hi:.4f}): {c}")
    _echo_config(cfg, ["seed", "threads", "surface_samples", "uniform_samples"])
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or ())
    _parallel.set_threads(cfg["threads"])
    ss = load_sample_set(args.samples)

    scale, offset = 1.0, (0.0, 0.0, 0.0)
    sample_manifest = Path(str(args.samples) + ".manifest.json")
    if sample_manifest.exists():
        norm = json.loads(sample_manifest.read_text()).get("normalization", {})
        scale = norm.get("scale", 1.0)
        offset = tuple(norm.get("offset", (0.0, 0.0, 0.0)))

    tc = TrainConfig(lr=cfg["train.lr"], batch_size=cfg["train.batch_size"],
                     epochs=cfg["train.epochs"], seed=cfg["seed"],
                     checkpoint_every=cfg["train.checkpoint_every"])
    udf_arch = MlpArch(3, cfg["train.hidden"], cfg["train.depth"], 1)
    nvf_arch = MlpArch(3, cfg["train.hidden"], cfg["train.depth"], 3)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def snapshot(net, epoch, params):
        from .mlp import _write_net
        arch = udf_arch if net == "udf" else nvf_arch
        _write_net(out_dir / f"{net}_epoch{epoch + 1:04d}.bin", arch, params)

    model = train_fields(ss, tc, udf_arch, nvf_arch, scale=scale, offset=offset,
                         callback=snapshot if tc.checkpoint_every else None)
    save_checkpoint(model, out_dir)

    with open(out_dir / "losses.csv", "w") as f:
        f.write("net,epoch,train_loss,val_loss\n")
        for net in ("udf", "nvf"):
            hist = model.history[net]
            for e, tr, va in zip(hist["epoch"], hist["train_loss"], hist["val_loss"]):
                f.write(f"{net},{e},{tr!r},{va!r}\n")
    write_manifest(out_dir / "model.json", cfg, {"samples": args.samples})
    for net in ("udf", "nvf"):
        hist = model.history[net]
        if hist["val_loss"]:
            print(f"train[{net}]: final val loss {hist['val_loss'][-1]:.6f} "
                  f"(best {min(hist['val_loss']):.6f})")
    _echo_config(cfg, ["seed", "threads", "train."])
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = load_config(args.config, args.set or ())
    _parallel.set_threads(cfg["threads"])
    field, inputs = _resolve_field(args, cfg)
    tc = _trace_config(cfg, strategy=args.strategy)
    cam = _camera(cfg)
    product = render(field, cam, tc)

    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    depth_raw = Path(f"{prefix}.depth.raw")
    save_raw_grid(depth_raw, product.depth)
    save_depth_png(f"{prefix}.depth.png", product.depth)
    save_raw_grid(f"{prefix}.normal.raw", product.normals)
    save_normal_png(f"{prefix}.normal.png", product.normals)
    write_manifest(depth_raw, cfg, inputs, {
        "strategy": tc.strategy,
        "hit_pixels": int(np.isfinite(product.depth).sum()),
        "flagged_pixels": int((product.flags != 0).sum()),
    })
    print(f"render: {tc.strategy}, {int(np.isfinite(product.depth).sum())} hit pixels "
          f"-> {prefix}.depth.raw/.png, {prefix}.normal.raw/.png")
    _echo_config(cfg, ["seed", "threads", "trace.", "cam.", "analytic."])
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = load_config(args.config, args.set or ())
    _parallel.set_threads(cfg["threads"])
    field, inputs = _resolve_field(args, cfg)
    tau = cfg["mesh.tau"] if cfg["mesh.tau"] > 0 else None
    mesh = extract_mesh(field, cfg["mesh.initial_res"], cfg["mesh.levels"], tau)
    save_mesh(mesh.vertices, mesh.faces, args.out)
    write_manifest(args.out, cfg, inputs,
                   {"vertices": len(mesh.vertices), "triangles": len(mesh.faces)})
    print(f"extract: {len(mesh.vertices)} vertices, {len(mesh.faces)} triangles -> {args.out}")
    _echo_config(cfg, ["mesh.", "analytic."])
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set or ())
    _parallel.set_threads(cfg["threads"])
    report: dict = {"config.seed": cfg["seed"]}
    inputs = {}

    if args.gt_depth and args.est_depth:
        gt = load_raw_grid(args.gt_depth)
        est = load_raw_grid(args.est_depth)
        report["depth_mae"] = depth_mae(gt, est)
        report["pixel_iou"] = pixel_iou(gt, est)
        inputs["gt_depth"] = args.gt_depth
        inputs["est_depth"] = args.est_depth
        if args.gt_normal and args.est_normal:
            gtn = load_raw_grid(args.gt_normal)
            estn = load_raw_grid(args.est_normal)
            report["normal_error"] = normal_error(gtn, estn, valid_mask(gt, est))
            inputs["gt_normal"] = args.gt_normal
            inputs["est_normal"] = args.est_normal

    if args.gt_mesh and args.est_mesh:
        from .mesher import Mesh

        def mesh_points(path):
            soup = load_soup(path)
            tris = soup.tris
            verts = tris.reshape(-1, 3)
            faces = np.arange(len(verts), dtype=np.int32).reshape(-1, 3)
            return sample_mesh_points(Mesh(verts, faces), args.chamfer_samples, cfg["seed"])

        report["chamfer"] = chamfer(mesh_points(args.gt_mesh), mesh_points(args.est_mesh))
        report["chamfer_convention"] = "sum of mean squared NN distances, both directions"
        inputs["gt_mesh"] = args.gt_mesh
        inputs["est_mesh"] = args.est_mesh

    if len(report) <= 1:
        raise DataError("nothing to evaluate: pass depth-map and/or mesh pairs")
    write_report(args.out, report)
    write_manifest(args.out, cfg, inputs)
    for key, value in sorted(report.items()):
        print(f"  {key} = {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sub):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soupfields",
                     description="Distance/normal field learning from triangle soups")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("synth", help="generate a parametric test soup")
    p.add_argument("--out", required=True, help="output mesh path (.obj or .ply)")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("sample", help="build a labeled sample set from a soup")
    p.add_argument("--soup", required=True)
    p.add_argument("--out", required=True, help="output sample-set path")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = subs.add_parser("train", help="train the distance/normal network pair")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True, help="output checkpoint directory")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("render", help="sphere-trace a depth/normal map")
    p.add_argument("--model", help="checkpoint directory")
    p.add_argument("--analytic", choices=["sphere", "split_sphere", "plane"],
                   help="render an exact analytic field instead of a model")
    p.add_argument("--strategy", choices=["standard", "resample", "projection"])
    p.add_argument("--out", required=True, help="output path prefix")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = subs.add_parser("extract", help="extract an iso-surface mesh")
    p.add_argument("--model", help="checkpoint directory")
    p.add_argument("--analytic", choices=["sphere", "split_sphere", "plane"])
    p.add_argument("--out", required=True, help="output mesh path (.obj or .ply)")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = subs.add_parser("eval", help="compare renders/meshes and write a report")
    p.add_argument("--gt-depth")
    p.add_argument("--est-depth")
    p.add_argument("--gt-normal")
    p.add_argument("--est-normal")
    p.add_argument("--gt-mesh")
    p.add_argument("--est-mesh")
    p.add_argument("--chamfer-samples", type=int, default=30000)
    p.add_argument("--out", required=True, help="output report path (JSON)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
