import struct
from pathlib import Path

import numpy as np

from scancap.operations.errors import DataError
from scancap.operations.interface import TensorMap

MAGIC = b"SCANCKPT"
VERSION = 1


class CheckpointFile:
    """Binary checkpoint: magic, version, config echo, then named float32 tensors.

    Integers are little-endian uint32; tensor data is little-endian float32
    in C order.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def save(self, tensors: TensorMap, config_echo: str) -> None:
        parts = [MAGIC, struct.pack("<I", VERSION)]
        echo = config_echo.encode("utf-8")
        parts += [struct.pack("<I", len(echo)), echo, struct.pack("<I", len(tensors))]
        for name, value in tensors.items():
            encoded = name.encode("utf-8")
            parts += [struct.pack("<I", len(encoded)), encoded, struct.pack("<I", value.ndim)]
            parts += [struct.pack("<I", dim) for dim in value.shape]
            parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_bytes(b"".join(parts))
        except OSError as exc:
            raise DataError(f"cannot write checkpoint {self.path}: {exc.strerror}") from exc

    def load(self) -> tuple[TensorMap, str]:
        try:
            blob = self.path.read_bytes()
        except FileNotFoundError:
            raise DataError(f"checkpoint {self.path} does not exist; run `train` first") from None
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {self.path}: {exc.strerror}") from exc
        reader = _Reader(blob, self.path)
        if reader.take(len(MAGIC)) != MAGIC:
            raise DataError(f"{self.path} is not a scancap checkpoint")
        version = reader.uint()
        if version != VERSION:
            raise DataError(f"{self.path}: unsupported checkpoint version {version}")
        echo = reader.take(reader.uint()).decode("utf-8")
        tensors: TensorMap = {}
        for _ in range(reader.uint()):
            name = reader.take(reader.uint()).decode("utf-8")
            shape = tuple(reader.uint() for _ in range(reader.uint()))
            count = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(reader.take(4 * count), dtype="<f4")
            tensors[name] = data.reshape(shape).astype(np.float32)
        if reader.offset != len(blob):
            raise DataError(f"{self.path}: {len(blob) - reader.offset} trailing bytes")
        return tensors, echo


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.blob):
            raise DataError(f"{self.path}: truncated at byte {self.offset}")
        chunk = self.blob[self.offset : end]
        self.offset = end
        return chunk

    def uint(self) -> int:
        return struct.unpack("<I", self.take(4))[0]
