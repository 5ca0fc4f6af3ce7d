import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "armagraph._kernels",
                ["src/armagraph/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # No Cython available: install pure-Python only, the package falls back
    # to the numpy kernels at import time.
    extensions = []

for ext in extensions:
    ext.optional = True

setup(ext_modules=extensions)
