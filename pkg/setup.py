"""Build script: compiles the optional allocation cost kernel.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time).  Set PCNKIT_PURE=1 to skip the
extension build entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PCNKIT_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "pcnkit.allocation._cost_kernel",
                    ["src/pcnkit/allocation/_cost_kernel.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
