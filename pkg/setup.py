import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ecgi_tv._kernels",
                ["src/ecgi_tv/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-Python only, the package falls back
    # to the NumPy kernels at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
