"""Build script for the optional compiled Gibbs kernels.

The package works without the extension; ``mmtopic._backend`` falls back to
the pure-Python kernels when ``mmtopic._gibbs_ext`` cannot be imported.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MMTOPIC_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = [
            Extension(
                "mmtopic._gibbs_ext",
                ["src/mmtopic/_gibbs_ext.pyx"],
                include_dirs=[np.get_include()],
                # fp-contract=off keeps results bit-identical to the Python kernels
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
