"""Builds the optional compiled scan kernel.

The package works without it: mdx.mcda falls back to the pure-Python
kernel when the extension is missing (no compiler, no Cython).
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("mdx._scan", ["src/mdx/_scan.pyx"], optional=True)],
        language_level=3,
    )

setup(ext_modules=ext_modules)
