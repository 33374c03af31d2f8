"""Build script for the optional compiled kernels.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time); set SOUPFIELDS_NO_EXT=1 to skip
the build explicitly.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SOUPFIELDS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "soupfields._kernels._core",
                    sources=["src/soupfields/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
