"""Builds the optional compiled kernel extension.

The package is fully functional without it (a NumPy fallback is selected
at import time), so any failure here should not block installation:
build with `pip install -e . --no-build-isolation` or
`python setup.py build_ext --inplace`.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "betacp._kernels_cy",
                ["src/betacp/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no -ffast-math / -march=native: results must track the
                # NumPy fallback to the last few ulps
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
