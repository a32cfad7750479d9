"""Build script for the compiled simulation kernel.

The extension is optional: if Cython (or a C compiler) is unavailable the
package installs without it and the simulator falls back to the pure-Python
kernel at import time.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    # -ffp-contract=off keeps the compiled kernel bit-identical to the
    # pure-Python kernel (no fused multiply-add contraction).
    ext_modules = cythonize(
        [
            Extension(
                "puzzlerl.sim._kernel",
                ["src/puzzlerl/sim/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
