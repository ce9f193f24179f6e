"""Build script: compiles the optional rollout kernel extension.

The compiled kernel is a pure speed optimization; the package falls back to
the vectorized numpy implementation when the extension is unavailable, so a
failed compile must not fail the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled rollout kernel not built ({exc}); "
            "falling back to the numpy kernel",
            file=sys.stderr,
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython unavailable; skipping compiled kernel", file=sys.stderr)
        return []
    ext = Extension(
        "bcmppi._kernels._rollout_cy",
        ["src/bcmppi/_kernels/_rollout_cy.pyx"],
        # -ffp-contract=off keeps the C arithmetic bit-identical to the
        # numpy kernel (no FMA contraction).
        extra_compile_args=["-O2", "-ffp-contract=off"],
        language="c",
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
