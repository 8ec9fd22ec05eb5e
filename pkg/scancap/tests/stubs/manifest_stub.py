from typing import Sequence

from scancap.operations.errors import DataError
from scancap.operations.synthdata import SyntheticScene
from scancap.tests.stubs.stub_interface import ManifestStubInterface


class ManifestStub(ManifestStubInterface):
    def __init__(self, scenes: list[SyntheticScene] | None = None, geometry=(16, 32, 32)) -> None:
        self._scenes = list(scenes or [])
        self._geometry = geometry
        self.writes = 0

    def write(self, scenes: Sequence[SyntheticScene], T: int, H: int, W: int) -> None:
        self._scenes = list(scenes)
        self._geometry = (T, H, W)
        self.writes += 1

    def read_all(self) -> tuple[list[SyntheticScene], tuple[int, int, int]]:
        return list(self._scenes), self._geometry

    def read_by_seed(self, sample_seed: int) -> SyntheticScene:
        for scene in self._scenes:
            if scene.sample_seed == sample_seed:
                return scene
        raise DataError(f"sample seed {sample_seed} is not in the manifest")
