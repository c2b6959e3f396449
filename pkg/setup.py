"""Build script: compiles the optional Cython kernel extension when possible.

The package is fully functional without the extension (a numpy implementation of
the same kernels is selected at import time), so any failure here downgrades to
a pure-Python install instead of aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/polyest/conic/_kernels.pyx"],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # Cython or a C toolchain is missing: pure-Python install
    print(f"skipping compiled kernels ({exc}); using the numpy backend")

setup(ext_modules=ext_modules)
