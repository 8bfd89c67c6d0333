import warnings

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the compiled kernel, but fall back to pure Python on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler / broken toolchain
            warnings.warn(f"compiled kernel skipped ({exc}); pure-Python backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernel skipped ({exc}); pure-Python backend will be used")


def extensions():
    from Cython.Build import cythonize

    ext = Extension(
        "dcopt._kernels",
        sources=["src/dcopt/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
