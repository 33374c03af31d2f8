import numpy as np
import pytest

from soupfields.field import NeuralField, SplitSphereField
from soupfields.geometry import TriangleSoup
from soupfields.mlp import MlpArch, TrainConfig, train_fields
from soupfields.sampler import make_sample_set
from soupfields.shapes import split_sphere_mesh

UNIT_RIGHT_TRIANGLE = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@pytest.fixture
def unit_triangle():
    return UNIT_RIGHT_TRIANGLE.copy()


@pytest.fixture
def quad_soup():
    """Two triangles forming the unit square in the z=0 plane."""
    tris = np.array([
        [[0, 0, 0], [1, 0, 0], [1, 1, 0]],
        [[0, 0, 0], [1, 1, 0], [0, 1, 0]],
    ], dtype=np.float64)
    return TriangleSoup(tris)


# Desk-scale fixture: a split-sphere soup, its labeled sample set, and the
# trained field pair. Built once per session; several test modules and the
# acceptance suite share it. Sizes/seeds are pinned so results reproduce.
DESK_SURFACE_SAMPLES = 50000
DESK_UNIFORM_SAMPLES = 5000
DESK_SAMPLE_SEED = 7
DESK_TRAIN_SEED = 3
DESK_RADIUS = 0.5
DESK_GAP = 0.1


@pytest.fixture(scope="session")
def desk_split_sphere():
    import time

    verts, faces = split_sphere_mesh(DESK_RADIUS, DESK_GAP, rings=24, segments=48)
    soup = TriangleSoup.from_arrays(verts, faces)
    t0 = time.time()
    samples = make_sample_set(soup, DESK_SURFACE_SAMPLES, DESK_UNIFORM_SAMPLES,
                              seed=DESK_SAMPLE_SEED)
    t_sample = time.time() - t0

    cfg = TrainConfig(lr=2e-3, batch_size=4096, epochs=150, seed=DESK_TRAIN_SEED)
    t0 = time.time()
    model = train_fields(samples, cfg,
                         udf_arch=MlpArch(3, 128, 5, 1),
                         nvf_arch=MlpArch(3, 64, 4, 3))
    t_train = time.time() - t0
    return {
        "soup": soup,
        "samples": samples,
        "model": model,
        "field": NeuralField(model),
        "gt_field": SplitSphereField((0, 0, 0), DESK_RADIUS, DESK_GAP),
        "train_seconds": t_train,
        "sample_seconds": t_sample,
    }
