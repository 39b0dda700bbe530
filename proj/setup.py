"""Builds the `equiplan._equiplan` extension by driving the CMake project."""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DCMAKE_BUILD_TYPE=Release",
            "-DEQUIPLAN_BUILD_TESTS=OFF",
            "-DEQUIPLAN_BUILD_PYTHON=ON",
        ]
        if shutil.which("ninja"):
            cmake_args += ["-G", "Ninja"]
        subprocess.run(["cmake", "-S", str(source_dir), "-B", str(build_dir), *cmake_args],
                       check=True)
        subprocess.run(["cmake", "--build", str(build_dir), "--target", "_equiplan"],
                       check=True)

        staged = build_dir / "python" / "equiplan"
        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent
        out_dir.mkdir(parents=True, exist_ok=True)
        for so in staged.glob("_equiplan*.so"):
            shutil.copy2(so, out_dir / so.name)


setup(
    ext_modules=[CMakeExtension("equiplan._equiplan")],
    cmdclass={"build_ext": CMakeBuild},
)
