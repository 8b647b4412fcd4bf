"""Builds the optional compiled n-gram kernel.

The package works without it: codeio_forge.decontam falls back to the pure
Python kernel when the extension is absent (or when CODEIO_FORGE_PURE=1).
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "codeio_forge._ngramcore",
                ["src/codeio_forge/_ngramcore.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
