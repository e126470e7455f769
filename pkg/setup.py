import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

# No -ffast-math / -march=native: the kernels must stay IEEE-compliant so
# results are reproducible across installs.
extensions = [
    Extension(
        "fedfits._kernels._fast",
        ["src/fedfits/_kernels/_fast.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
