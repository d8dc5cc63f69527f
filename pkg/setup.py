import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "sysrisk._clearing_ext",
                ["src/sysrisk/_clearing_ext.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )
else:
    # The package still works without the compiled kernel: clearing falls
    # back to the vectorised numpy implementation at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
