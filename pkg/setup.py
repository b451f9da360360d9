"""Build the optional Cython core; the package still works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("BOSEPAIR_NO_EXT", "") not in ("1", "true", "yes"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            "src/bosepair/_core.pyx",
            compiler_directives={"language_level": 3},
            quiet=True,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
