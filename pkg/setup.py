from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the compiled kernel must reproduce the pure-Python
# fallback bit for bit, so FMA contraction of double expressions is disabled.
setup(
    ext_modules=cythonize(
        [
            Extension(
                "branchflow.kernels._core",
                ["src/branchflow/kernels/_core.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
)
