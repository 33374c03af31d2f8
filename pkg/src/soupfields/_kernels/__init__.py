"""Kernel backend selection.

The compiled Cython core is preferred when built; otherwise (or when
SOUPFIELDS_NO_EXT=1 is set) the pure-Python fallback is used. Both
backends are bit-compatible.
"""
import os

from . import fallback
from .fallback import MC_CORNER_OFFSETS, MC_EDGE_AXIS, MC_EDGE_LOWER, MC_EDGE_UPPER

if os.environ.get("SOUPFIELDS_NO_EXT") == "1":
    _core = None
else:
    try:
        from . import _core
    except ImportError:
        _core = None

HAVE_COMPILED = _core is not None
BACKEND = "compiled" if HAVE_COMPILED else "fallback"

if HAVE_COMPILED:
    kdtree_query = _core.kdtree_query
    mc_cells = _core.mc_cells
else:
    kdtree_query = fallback.kdtree_query
    mc_cells = fallback.mc_cells

__all__ = [
    "BACKEND",
    "HAVE_COMPILED",
    "MC_CORNER_OFFSETS",
    "MC_EDGE_AXIS",
    "MC_EDGE_LOWER",
    "MC_EDGE_UPPER",
    "fallback",
    "kdtree_query",
    "mc_cells",
]
