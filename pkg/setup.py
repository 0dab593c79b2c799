import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are an optimization; the package falls back to the
# NumPy implementations when the extension is absent.  FHV_SKIP_EXT=1 skips
# the build entirely (useful on hosts without a C toolchain).
if cythonize is None or os.environ.get("FHV_SKIP_EXT"):
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "fhv._ckern",
                ["src/fhv/_ckern.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
