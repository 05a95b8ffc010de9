import os

import numpy as np
from setuptools import Extension, setup

# NCSAGA_NO_EXT=1 builds a pure-Python install; the kernels fall back at import.
ext_modules = []
if not os.environ.get("NCSAGA_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ncsaga.kernels._fast",
                ["src/ncsaga/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
