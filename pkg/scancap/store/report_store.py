import csv
from pathlib import Path
from typing import Sequence

from scancap.operations.errors import DataError
from scancap.operations.interface import Row


class CsvReport:
    """Writes each report as `<directory>/<name>` with a header row."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def write(self, name: str, columns: Sequence[str], rows: Sequence[Row]) -> str:
        path = self.directory / name
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
                writer.writeheader()
                writer.writerows(rows)
        except OSError as exc:
            raise DataError(f"cannot write report {path}: {exc.strerror}") from exc
        return str(path)
