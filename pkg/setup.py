"""Build script: compiles the optional Cython key-encoding core.

The package works without the extension (pure-Python fallback selected at
import time), so a failed compile only costs speed.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/scalestore/_keyenc.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write("scalestore: skipping Cython extension (%s)\n" % exc)

setup(ext_modules=ext_modules)
