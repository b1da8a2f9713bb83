"""Build script for the compiled kernel core.

Project metadata lives in pyproject.toml; this file only declares the
optional Cython extension. If Cython (or a C compiler) is unavailable the
install still succeeds and the package falls back to the pure-Python
kernels at import time.
"""

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
                "mtsent.autodiff._kernels",
                ["src/mtsent/autodiff/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
