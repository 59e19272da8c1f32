"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so a failed compile only degrades performance.
Set QPERC_PURE_PYTHON=1 to skip the extension entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible; warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            print(f"WARNING: skipping compiled kernels ({exc}); "
                  "qperc will use the NumPy fallback backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: could not build {ext.name} ({exc}); "
                  "qperc will use the NumPy fallback backend")


ext_modules = []
if os.environ.get("QPERC_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "qperc.kernels._cykernels",
                    ["src/qperc/kernels/_cykernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    # -fcx-limited-range: naive complex multiply (no NaN/Inf
                    # recovery branches); deterministic and ~10x faster here.
                    extra_compile_args=["-O3", "-march=native", "-fcx-limited-range"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
