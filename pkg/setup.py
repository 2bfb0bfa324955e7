"""Build script for the compiled WKV scan kernel.

The package works without the extension (a numpy fallback is selected at
import time) but training is an order of magnitude faster with it.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "urwkv._wkv_kernel",
        ["src/urwkv/_wkv_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
