"""Builds the _core extension by delegating to the CMake project.

The CMake tree is the single source of truth for compile flags and sources;
this shim only asks it for the extension target and drops the result into the
package directory.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).resolve().parent


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            [
                "cmake",
                "-S", str(ROOT),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DGEMFLOW_BUILD_TESTS=OFF",
                f"-Dpybind11_DIR={self._pybind11_dir()}",
                f"-DPYTHON_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core", "--parallel"],
            check=True,
        )

        built = list((build_dir / "python" / "gemflow").glob("_core*.so"))
        if not built:
            raise RuntimeError("cmake did not produce the _core extension")
        out_dir.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[0], out_dir / built[0].name)

    @staticmethod
    def _pybind11_dir():
        import pybind11

        return pybind11.get_cmake_dir()


setup(
    ext_modules=[CMakeExtension("gemflow._core")],
    cmdclass={"build_ext": CMakeBuild},
)
