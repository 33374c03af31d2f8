import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soupfields.errors import DataError
from soupfields.mesher import Mesh
from soupfields.metrics import (chamfer, depth_mae, normal_error, pixel_iou,
                                read_report, sample_mesh_points, write_report)


def brute_chamfer(a, b):
    """Quadratic double-loop oracle, same squared sum-of-means convention."""
    d2_ab = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1).min(axis=1)
    d2_ba = ((b[:, None, :] - a[None, :, :]) ** 2).sum(-1).min(axis=1)
    return float(np.mean(d2_ab, dtype=np.float64) + np.mean(d2_ba, dtype=np.float64))


class TestDepthMae:
    def test_identical_maps(self):
        d = np.random.default_rng(0).random((8, 8))
        assert depth_mae(d, d.copy()) == 0.0

    def test_constant_offset(self):
        d = np.random.default_rng(1).random((8, 8))
        d[0, 0] = np.inf
        assert depth_mae(d, d + 0.01) == pytest.approx(0.01)

    def test_single_mutual_pixel(self):
        gt = np.array([[1.0, np.inf], [np.inf, np.inf]])
        est = np.array([[1.25, np.inf], [3.0, np.inf]])
        assert depth_mae(gt, est) == pytest.approx(0.25)

    def test_no_valid_pixels_error(self):
        gt = np.array([[np.inf, 1.0]])
        est = np.array([[1.0, np.inf]])
        with pytest.raises(DataError):
            depth_mae(gt, est)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            depth_mae(np.zeros((2, 2)), np.zeros((2, 3)))


class TestNormalError:
    def _unit(self, shape, seed):
        v = np.random.default_rng(seed).standard_normal(shape)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def test_identical_and_flipped(self):
        n = self._unit((4, 4, 3), 2)
        valid = np.ones((4, 4), dtype=bool)
        assert normal_error(n, n.copy(), valid) == 0.0
        assert normal_error(n, -n, valid) == 0.0

    def test_orthogonal_pair(self):
        gt = np.zeros((1, 1, 3))
        gt[..., 0] = 1.0
        est = np.zeros((1, 1, 3))
        est[..., 1] = 1.0
        valid = np.ones((1, 1), dtype=bool)
        assert normal_error(gt, est, valid) == pytest.approx(np.sqrt(2))

    def test_per_pixel_sign_flips_ignored(self):
        n = self._unit((6, 6, 3), 3)
        flips = np.random.default_rng(4).choice([-1.0, 1.0], size=(6, 6, 1))
        valid = np.ones((6, 6), dtype=bool)
        assert normal_error(n, n * flips, valid) == pytest.approx(0.0, abs=1e-12)

    def test_only_valid_pixels_counted(self):
        n = self._unit((2, 2, 3), 5)
        est = n.copy()
        est[0, 0] = -est[0, 0] @ np.eye(3)  # garbage at an invalid pixel
        est[0, 0, 0] += 10
        valid = np.ones((2, 2), dtype=bool)
        valid[0, 0] = False
        assert normal_error(n, est, valid) == pytest.approx(0.0, abs=1e-12)


class TestPixelIou:
    def test_identical_masks(self):
        d = np.random.default_rng(6).random((5, 5))
        d[2, 2] = np.inf
        assert pixel_iou(d, d + 1.0) == 1.0

    def test_disjoint_masks(self):
        gt = np.array([[1.0, np.inf]])
        est = np.array([[np.inf, 1.0]])
        assert pixel_iou(gt, est) == 0.0

    def test_three_mutual_one_xor(self):
        gt = np.array([[1.0, 1.0], [1.0, 1.0]])
        est = np.array([[1.0, 1.0], [1.0, np.inf]])
        assert pixel_iou(gt, est) == pytest.approx(0.75)

    def test_neither_finite_excluded(self):
        gt = np.array([[np.inf, 1.0, np.inf]])
        est = np.array([[np.inf, 1.0, np.inf]])
        assert pixel_iou(gt, est) == 1.0

    @settings(deadline=None, max_examples=50)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_bounds_and_coincidence(self, seed):
        rng = np.random.default_rng(seed)
        gt = rng.random((4, 4))
        est = rng.random((4, 4))
        gt[rng.random((4, 4)) < 0.4] = np.inf
        est[rng.random((4, 4)) < 0.4] = np.inf
        v = pixel_iou(gt, est)
        assert 0.0 <= v <= 1.0
        assert (v == 1.0) == (np.isfinite(gt) == np.isfinite(est)).all()


class TestChamfer:
    def test_identical_sets(self):
        a = np.random.default_rng(7).random((50, 3))
        assert chamfer(a, a.copy()) == 0.0

    def test_two_point_example(self):
        a = np.zeros((1, 3))
        b = np.array([[0.1, 0.0, 0.0]])
        assert chamfer(a, b) == pytest.approx(0.02)

    def test_matches_quadratic_scan(self):
        rng = np.random.default_rng(8)
        a = rng.random((500, 3))
        b = rng.random((500, 3)) * 1.1 - 0.05
        assert chamfer(a, b) == brute_chamfer(a, b)  # exact, same reduction

    def test_symmetric(self):
        rng = np.random.default_rng(9)
        a = rng.random((120, 3))
        b = rng.random((80, 3))
        assert chamfer(a, b) == chamfer(b, a)

    def test_permutation_invariant(self):
        # invariant up to float summation order
        rng = np.random.default_rng(10)
        a = rng.random((60, 3))
        b = rng.random((60, 3))
        pa = a[rng.permutation(60)]
        assert chamfer(pa, b) == pytest.approx(chamfer(a, b), rel=1e-14)

    def test_empty_set_rejected(self):
        with pytest.raises(DataError):
            chamfer(np.empty((0, 3)), np.zeros((3, 3)))


class TestSampleMeshPoints:
    def test_area_weighted_sampling(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        mesh = Mesh(verts, np.array([[0, 1, 2]], dtype=np.int32))
        pts = sample_mesh_points(mesh, 500, seed=3)
        assert pts.shape == (500, 3)
        assert np.allclose(pts[:, 2], 0.0)

    def test_empty_mesh_rejected(self):
        mesh = Mesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int32))
        with pytest.raises(DataError):
            sample_mesh_points(mesh, 10, seed=0)


class TestReport:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(path, {"depth_mae": 0.01, "pixel_iou": 0.97, "strategy": "projection"})
        back = read_report(path)
        assert back["depth_mae"] == 0.01
        assert back["strategy"] == "projection"

    def test_flat_values_only(self, tmp_path):
        with pytest.raises(DataError):
            write_report(tmp_path / "r.json", {"nested": {"a": 1}})

    def test_numpy_scalars_accepted(self, tmp_path):
        path = tmp_path / "r.json"
        write_report(path, {"v": np.float64(0.5), "n": np.int64(3)})
        back = read_report(path)
        assert back["v"] == 0.5 and back["n"] == 3
