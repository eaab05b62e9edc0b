"""Build script: compiles the optional accelerator extension.

The package works without the extension (a numpy fallback is selected at
import time), so a missing compiler or Cython must not fail the install.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "driftcal._kernels._accel",
                ["src/driftcal/_kernels/_accel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
