import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "lidarmot._raycast",
                ["src/lidarmot/_raycast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback is selected at import time, so the package still
    # works without the compiled kernel.
    extensions = []

setup(ext_modules=extensions)
