import glob
import os
import shutil
import subprocess

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup


def eigen_include_dir() -> str:
    env = os.environ.get("EIGEN3_INCLUDE_DIR")
    if env:
        return env
    if shutil.which("pkg-config"):
        try:
            out = subprocess.run(
                ["pkg-config", "--cflags-only-I", "eigen3"],
                check=True,
                capture_output=True,
                text=True,
            ).stdout.strip()
            if out.startswith("-I"):
                return out.split()[0][2:]
        except subprocess.CalledProcessError:
            pass
    return "/usr/include/eigen3"


ext = Pybind11Extension(
    "emvsim._emvsim",
    sorted(glob.glob("src/*.cpp")) + ["bindings/pymodule.cpp"],
    include_dirs=["include", "vendor", eigen_include_dir()],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
