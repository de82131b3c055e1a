"""Builds the optional compiled kernel extension.

The package works without it (a pure-NumPy fallback is selected at import),
but the hot loops -- batch-size-1 receiver training and all-pairs edit
distances -- are an order of magnitude faster compiled.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "ntcbench._kernels",
        sources=["src/ntcbench/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
