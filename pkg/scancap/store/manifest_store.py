import csv
import re
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from scancap.operations.errors import DataError
from scancap.operations.synthdata import SyntheticScene, caption_of

MANIFEST_VERSION = "v1"
HEADER_PATTERN = re.compile(r"^# scancap-manifest v1 frames=(\d+) height=(\d+) width=(\d+)$")
COLUMNS = [
    "sample_seed",
    "shape",
    "color",
    "direction",
    "speed",
    "event",
    "event_frame",
    "origin_row",
    "origin_col",
    "caption",
]


class ManifestFile:
    """Line-oriented CSV manifest: one scene per row, frames regenerated on demand."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def write(self, scenes: Sequence[SyntheticScene], T: int, H: int, W: int) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("w", encoding="utf-8", newline="") as fh:
                fh.write(f"# scancap-manifest {MANIFEST_VERSION} frames={T} height={H} width={W}\n")
                writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
                writer.writeheader()
                for scene in scenes:
                    writer.writerow({**scene.model_dump(), "caption": caption_of(scene)})
        except OSError as exc:
            raise DataError(f"cannot write manifest {self.path}: {exc.strerror}") from exc

    def read_all(self) -> tuple[list[SyntheticScene], tuple[int, int, int]]:
        try:
            with self.path.open("r", encoding="utf-8", newline="") as fh:
                header = fh.readline().rstrip("\n")
                match = HEADER_PATTERN.match(header)
                if match is None:
                    raise DataError(f"{self.path}:1: not a scancap manifest header: {header!r}")
                geometry = tuple(int(g) for g in match.groups())
                reader = csv.DictReader(fh)
                if reader.fieldnames != COLUMNS:
                    raise DataError(f"{self.path}:2: expected columns {','.join(COLUMNS)}")
                scenes = [self._parse(row, line) for line, row in enumerate(reader, start=3)]
        except FileNotFoundError:
            raise DataError(f"manifest {self.path} does not exist") from None
        except OSError as exc:
            raise DataError(f"cannot read manifest {self.path}: {exc.strerror}") from exc
        if not scenes:
            raise DataError(f"manifest {self.path} holds no scenes")
        return scenes, geometry

    def read_by_seed(self, sample_seed: int) -> SyntheticScene:
        scenes, _ = self.read_all()
        for scene in scenes:
            if scene.sample_seed == sample_seed:
                return scene
        raise DataError(f"sample seed {sample_seed} is not in manifest {self.path}")

    def _parse(self, row: dict, line: int) -> SyntheticScene:
        if None in row:
            raise DataError(f"{self.path}:{line}: more fields than the {len(COLUMNS)} columns")
        caption = row.pop("caption", None)
        try:
            scene = SyntheticScene.model_validate(row)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise DataError(
                f"{self.path}:{line}: bad {'.'.join(str(p) for p in first['loc'])}: {first['msg']}"
            ) from None
        if caption != caption_of(scene):
            raise DataError(f"{self.path}:{line}: caption {caption!r} does not match the scene")
        return scene
