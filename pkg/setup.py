"""Build script for the compiled convolution core.

The extension is optional: if the build fails (no compiler, no Cython)
the package installs anyway and falls back to the numpy kernels at import.
"""

import numpy
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    ext = Extension(
        "map2sat.kernels._convcore",
        sources=["src/map2sat/kernels/_convcore.pyx"],
        include_dirs=[numpy.get_include()],
        # no -ffast-math: the kernels promise IEEE-deterministic sums
        extra_compile_args=["-O3", "-march=native"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    extensions = cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )

setup(ext_modules=extensions)
