"""Build script: compiles the optional accelerated kernel extension.

The package works without the extension (a pure NumPy implementation is
selected at import time), so a failed compile only costs speed. Set
HOPWISE_REQUIRE_EXT=1 to turn a build failure into a hard error.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

REQUIRE_EXT = os.environ.get("HOPWISE_REQUIRE_EXT", "") == "1"


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    def _skip(self, exc):
        if REQUIRE_EXT:
            raise
        print(
            f"warning: building hopwise.kernels._core failed ({exc!r}); "
            "falling back to the pure NumPy kernels",
            file=sys.stderr,
        )


def extensions():
    source = "src/hopwise/kernels/_core.pyx"
    try:
        from Cython.Build import cythonize
    except ImportError:
        if REQUIRE_EXT:
            raise
        return []
    if not os.path.exists(source):
        if REQUIRE_EXT:
            raise FileNotFoundError(source)
        return []
    ext = Extension(
        "hopwise.kernels._core",
        sources=[source],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
