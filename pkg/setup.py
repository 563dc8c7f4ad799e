"""Build script for the optional compiled kernel core.

The package is pure Python plus one Cython extension, gobo._accel.  If the
extension cannot be built (no compiler, no Cython) the install still succeeds
and the package falls back to its numpy implementations at import time.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "gobo._accel",
                ["src/gobo/_accel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
