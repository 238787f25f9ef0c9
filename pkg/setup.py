"""Builds the optional Cython kernel extension.

The package works without it (a numpy fallback is selected at import time);
building the extension just makes training loops faster:

    pip install -e . --no-build-isolation
    # or explicitly:
    python setup.py build_ext --inplace
"""
from setuptools import setup

ext_modules = []
include_dirs = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/qaff/_kernels/_fast.pyx",
        compiler_directives={"language_level": 3, "boundscheck": False, "wraparound": False},
    )
    include_dirs = [numpy.get_include()]
except ImportError:
    print("Cython not available; installing with the pure-numpy kernel backend")

setup(ext_modules=ext_modules, include_dirs=include_dirs)
