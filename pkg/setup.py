from setuptools import setup
from setuptools.extension import Extension

import numpy

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "spadsim._kernels",
        ["src/spadsim/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

directives = {
    "language_level": 3,
    "boundscheck": False,
    "wraparound": False,
    "cdivision": True,
}

setup(
    ext_modules=cythonize(extensions, compiler_directives=directives)
    if cythonize is not None
    else [],
)
