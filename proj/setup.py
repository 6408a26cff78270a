"""Builds the `expa._expa` extension from the C++ core sources.

scikit-build-core is the nicer backend for CMake projects, but it is not
always available where this package gets built; plain setuptools with
pybind11's helpers keeps `pip install .` self-contained.
"""

import glob

from pybind11.setup_helpers import ParallelCompile, Pybind11Extension, build_ext
from setuptools import setup

ParallelCompile("NPY_NUM_BUILD_JOBS").install()

ext = Pybind11Extension(
    "expa._expa",
    sources=sorted(glob.glob("src/*.cpp")) + ["python/module.cpp"],
    include_dirs=["include", "/usr/include/eigen3"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
