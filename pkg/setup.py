"""Build script: compiles the optional Cython kernel extension.

Set DPCTR_NO_EXT=1 to skip the extension entirely; the package then runs on
the pure-numpy kernel backend.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DPCTR_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "dpctr.kernels._core",
                    ["src/dpctr/kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
