"""Build script: compiles the trigram scoring kernel when Cython is available.

The package is fully functional without the extension; similarity scoring
falls back to the pure-Python implementation selected at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "semtable._kernels._trigram",
                ["src/semtable/_kernels/_trigram.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
