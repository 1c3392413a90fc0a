"""Build script: compiles the optional edit-distance extension.

The package works without the extension (a pure-Python fallback is selected
at import time); building it just makes key construction much faster.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/alienlang/_speedups.pyx"],
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-Python only.
    pass

setup(ext_modules=ext_modules)
