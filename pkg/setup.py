"""Build script: compiles the optional fast-kernel extension.

The package is pure Python; the extension only accelerates the candidate
sort/prune kernels. If Cython or a C++ toolchain is missing the build falls
back to the pure implementation (multipath.kernels.pure) selected at import.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Never fail the install over the accelerator extension."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: skipping fast kernels ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); using pure-Python fallback")


def extensions():
    if os.environ.get("MULTIPATH_NO_EXT") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; installing without fast kernels")
        return []
    ext = Extension(
        "multipath.kernels._fast",
        ["src/multipath/kernels/_fast.pyx"],
        language="c++",
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
