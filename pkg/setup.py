"""Builds the optional compiled kernel extension. The package works without
it (the numpy fallback is selected at import), so a missing compiler or
Cython only costs speed."""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("client_ts._kernels", ["src/client_ts/_kernels.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; installing with the pure-python kernel backend")

setup(ext_modules=ext_modules)
