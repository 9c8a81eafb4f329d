"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-NumPy backend is selected at
import time), so a failed compilation only disables the fast path.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ubot._kernels._fast",
                sources=["src/ubot/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    sys.stderr.write(f"ubot: skipping Cython extension ({exc}); numpy fallback will be used\n")

setup(ext_modules=ext_modules)
