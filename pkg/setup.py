import platform
import sys

from setuptools import Extension, setup

compile_args, link_args = ["-O3"], []
if sys.platform.startswith("linux") and platform.machine() in ("x86_64", "AMD64"):
    # lets gcc call glibc's vector log/log1p in the per-record reductions
    compile_args += ["-ffast-math"]
    link_args += ["-lmvec"]

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # no build tools: the numpy fallback is used at runtime
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ugdp._core._scan",
                ["src/ugdp/_core/_scan.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=compile_args,
                extra_link_args=link_args,
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
