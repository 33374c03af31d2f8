"""Disentangled implicit shape representation learned from triangle soups:
an unsigned distance field plus an unoriented normal field, consumed via
sphere-traced rendering and multi-resolution iso-surface extraction.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
from .field import (NeuralField, PlaneField, SoupBruteField, SphereField,  # noqa: F401
                    SplitSphereField)
from .geometry import NnIndex, TriangleSoup, normalize_soup  # noqa: F401
from .mesher import extract_grid, extract_mesh, marching_cubes  # noqa: F401
from .metrics import chamfer, depth_mae, normal_error, pixel_iou  # noqa: F401
from .mlp import MlpArch, TrainConfig, train_fields  # noqa: F401
from .sampler import make_sample_set  # noqa: F401
from .soup_io import load_soup, save_mesh  # noqa: F401
from .tracer import Camera, TraceConfig, render  # noqa: F401
