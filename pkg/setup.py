"""Build script: compiles the optional coordination-math speedup module.

The package is fully functional without the extension (a pure-Python
implementation of the same kernels is selected at import time), so any
failure to compile is downgraded to a warning.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "fedcoord._kernel._speedups",
                ["src/fedcoord/_kernel/_speedups.pyx"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # cython missing or compile failure: pure fallback
    warnings.warn(f"building without compiled kernels: {exc}")

setup(ext_modules=ext_modules)
