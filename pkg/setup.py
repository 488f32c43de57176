import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "recdyn.kernels._mf_sgd_c",
        ["src/recdyn/kernels/_mf_sgd_c.pyx"],
        include_dirs=[np.get_include()],
        # -O2 without -ffast-math: the pure-python fallback must produce
        # bit-identical results to the compiled kernel.
        extra_compile_args=["-O2"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
