from typing import TYPE_CHECKING, Any, Protocol, Sequence

import numpy as np

if TYPE_CHECKING:
    from scancap.operations.synthdata import SyntheticScene

TensorMap = dict[str, np.ndarray]
Row = dict[str, Any]


class ManifestInterface(Protocol):

    def write(self, scenes: Sequence["SyntheticScene"], T: int, H: int, W: int) -> None: ...

    def read_all(self) -> tuple[list["SyntheticScene"], tuple[int, int, int]]: ...

    def read_by_seed(self, sample_seed: int) -> "SyntheticScene": ...


class CheckpointInterface(Protocol):

    def save(self, tensors: TensorMap, config_echo: str) -> None: ...

    def load(self) -> tuple[TensorMap, str]: ...


class ReportInterface(Protocol):

    def write(self, name: str, columns: Sequence[str], rows: Sequence[Row]) -> str: ...
