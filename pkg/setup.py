import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "lqgrate._kernel",
        sources=["src/lqgrate/_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # both backends must round identically
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
        libraries=["m"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
