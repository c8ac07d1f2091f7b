"""Build script for the optional compiled kernel extension.

The package is pure Python plus one Cython extension holding the hot
scatter/segment kernels. If Cython or a C compiler is unavailable the
install proceeds without the extension and the numpy fallback kernels
are used at runtime.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Degrade to the pure-Python fallback when compilation fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"compiled kernels skipped ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"building {ext.name} failed ({exc}); using numpy fallback")


def extensions():
    if os.environ.get("DISCOG_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - build env without cython
        return []
    ext = Extension(
        "discog.kernels._ckernels",
        sources=["src/discog/kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
