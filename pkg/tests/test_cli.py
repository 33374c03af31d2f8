import json

import numpy as np
import pytest

from soupfields.cli import main
from soupfields.geometry import normalize_soup
from soupfields.soup_io import load_soup


def run(*argv):
    return main(list(argv))


TINY = [
    "--set", "surface_samples=1500", "--set", "uniform_samples=150",
    "--set", "train.hidden=16", "--set", "train.depth=3",
    "--set", "train.epochs=2", "--set", "train.batch_size=512",
    "--set", "train.lr=1e-3",
    "--set", "cam.width=24", "--set", "cam.height=24",
    "--set", "mesh.initial_res=8", "--set", "mesh.levels=1",
]


class TestHelpAndUsage:
    @pytest.mark.parametrize("cmd", ["synth", "sample", "train", "render", "extract", "eval"])
    def test_help_exits_zero(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            run(cmd, "--help")
        assert exc.value.code == 0

    def test_usage_error_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run("synth")  # missing --out
        assert exc.value.code == 1

    def test_unknown_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 1

    def test_missing_file_exits_two(self, tmp_path):
        assert run("sample", "--soup", str(tmp_path / "nope.obj"),
                   "--out", str(tmp_path / "s.bin")) == 2

    def test_unknown_config_key_exits_two(self, tmp_path):
        assert run("synth", "--out", str(tmp_path / "s.obj"),
                   "--set", "no.such.key=1") == 2

    def test_bad_config_file_exits_two(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("definitely not = a known key\n")
        assert run("synth", "--out", str(tmp_path / "s.obj"), "--config", str(cfg)) == 2


class TestSynth:
    def test_split_sphere_gap_zero_closed(self, tmp_path):
        out = tmp_path / "sphere.obj"
        assert run("synth", "--out", str(out), "--set", "synth.shape=sphere",
                   "--set", "synth.rings=8", "--set", "synth.segments=12") == 0
        soup = load_soup(out)
        lo, hi = soup.bbox
        # closed tessellation: no band missing around the equator
        centroids = soup.tris.mean(axis=1)
        assert np.abs(centroids[:, 2]).min() < 0.1
        assert lo[2] == pytest.approx(-0.5, abs=1e-6)
        assert hi[2] == pytest.approx(0.5, abs=1e-6)

    def test_split_sphere_has_gap(self, tmp_path):
        out = tmp_path / "split.obj"
        assert run("synth", "--out", str(out), "--set", "synth.gap=0.15") == 0
        soup = load_soup(out)
        z = soup.tris[..., 2]
        per_tri_max = z.max(axis=1)
        per_tri_min = z.min(axis=1)
        inside_band = (per_tri_max < 0.15 - 1e-9) & (per_tri_min > -0.15 + 1e-9)
        assert not inside_band.any()

    def test_planes_triangle_count(self, tmp_path):
        out = tmp_path / "planes.obj"
        assert run("synth", "--out", str(out), "--set", "synth.shape=planes",
                   "--set", "synth.planes=3") == 0
        assert len(load_soup(out)) == 6

    def test_bathtub_valid(self, tmp_path):
        out = tmp_path / "tub.ply"
        assert run("synth", "--out", str(out), "--set", "synth.shape=bathtub") == 0
        soup = load_soup(out)
        assert len(soup) == 18  # floor + 4 walls + 4 rim strips, 2 tris each

    @pytest.mark.parametrize("shape", ["sphere", "split_sphere", "planes", "bathtub"])
    def test_renormalizes_to_itself(self, shape, tmp_path):
        out = tmp_path / f"{shape}.obj"
        assert run("synth", "--out", str(out), "--set", f"synth.shape={shape}",
                   "--set", "synth.rings=6", "--set", "synth.segments=9") == 0
        soup = load_soup(out)
        normalized, scale, offset = normalize_soup(soup)
        assert scale == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(offset, 0.0, atol=1e-9)
        np.testing.assert_allclose(normalized.tris, soup.tris, atol=1e-9)

    def test_manifest_written(self, tmp_path):
        out = tmp_path / "s.obj"
        assert run("synth", "--out", str(out)) == 0
        manifest = json.loads((tmp_path / "s.obj.manifest.json").read_text())
        assert manifest["config"]["synth.shape"] == "split_sphere"
        assert "package" in manifest


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Tiny end-to-end run: synth -> sample -> train -> render -> extract -> eval."""
    root = tmp_path_factory.mktemp("pipeline")
    soup = root / "shape.obj"
    samples = root / "shape.samples"
    model = root / "model"
    assert run("synth", "--out", str(soup), *TINY) == 0
    assert run("sample", "--soup", str(soup), "--out", str(samples), *TINY) == 0
    assert run("train", "--samples", str(samples), "--out", str(model), *TINY) == 0
    assert run("render", "--model", str(model), "--out", str(root / "est"),
               "--strategy", "projection", *TINY) == 0
    assert run("render", "--analytic", "split_sphere", "--out", str(root / "gt"),
               "--set", "trace.eps=1e-5", "--set", "trace.max_iters=500", *TINY) == 0
    assert run("extract", "--model", str(model), "--out", str(root / "est.ply"), *TINY) == 0
    assert run("extract", "--analytic", "split_sphere", "--out", str(root / "gt.ply"),
               *TINY) == 0
    assert run("eval", "--gt-depth", str(root / "gt.depth.raw"),
               "--est-depth", str(root / "est.depth.raw"),
               "--gt-normal", str(root / "gt.normal.raw"),
               "--est-normal", str(root / "est.normal.raw"),
               "--gt-mesh", str(root / "gt.ply"), "--est-mesh", str(root / "est.ply"),
               "--chamfer-samples", "2000",
               "--out", str(root / "report.json"), *TINY) == 0
    return root


class TestPipeline:
    def test_artifacts_exist(self, pipeline):
        for name in ["shape.obj", "shape.samples", "model/model.json", "model/udf.bin",
                     "model/nvf.bin", "model/losses.csv", "est.depth.raw",
                     "est.depth.png", "est.normal.raw", "est.normal.png",
                     "est.ply", "report.json"]:
            assert (pipeline / name).exists(), name

    def test_manifests_carry_digests(self, pipeline):
        manifest = json.loads((pipeline / "shape.samples.manifest.json").read_text())
        assert "soup" in manifest["inputs"]
        assert len(manifest["inputs"]["soup"]["sha256"]) == 64
        assert "normalization" in manifest

    def test_report_keys(self, pipeline):
        report = json.loads((pipeline / "report.json").read_text())
        for key in ("depth_mae", "pixel_iou", "normal_error", "chamfer"):
            assert key in report
        assert 0.0 <= report["pixel_iou"] <= 1.0

    def test_losses_csv_structure(self, pipeline):
        lines = (pipeline / "model" / "losses.csv").read_text().strip().splitlines()
        assert lines[0] == "net,epoch,train_loss,val_loss"
        assert any(line.startswith("udf,") for line in lines[1:])
        assert any(line.startswith("nvf,") for line in lines[1:])

    def test_rerun_bit_identical(self, pipeline, tmp_path):
        soup2 = tmp_path / "shape.obj"
        samples2 = tmp_path / "shape.samples"
        assert run("synth", "--out", str(soup2), *TINY) == 0
        assert run("sample", "--soup", str(soup2), "--out", str(samples2), *TINY) == 0
        assert (pipeline / "shape.obj").read_bytes() == soup2.read_bytes()
        assert (pipeline / "shape.samples").read_bytes() == samples2.read_bytes()
