"""Build script: compiles the optional Cython kernel core.

The extension accelerates the bootstrap/KDE inner loops; a pure-NumPy
fallback in tailbound._kernels._ref is selected at import time when the
compiled module is unavailable, so a failed build never breaks the package.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try to build the extension; degrade to pure Python on any failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: skipping compiled kernels ({exc!r}); "
                  "pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc!r}); "
                  "pure-Python fallback will be used")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    return cythonize(
        [Extension(
            "tailbound._kernels._fastcore",
            sources=["src/tailbound/_kernels/_fastcore.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )],
        language_level=3,
    )


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
