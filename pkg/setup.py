import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # no Cython at build time: install runs on the pure numpy kernels
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "tailsim._kernels",
                ["src/tailsim/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
