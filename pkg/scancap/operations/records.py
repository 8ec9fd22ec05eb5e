from dataclasses import dataclass, field
from typing import Any

from scancap.operations.errors import UsageError


@dataclass
class Record:
    """Values saved by a forward pass for its matching backward pass."""

    op: str
    saved: dict[str, Any] | None = field(default_factory=dict)

    def expect(self, op: str) -> dict[str, Any]:
        if self.op != op:
            raise UsageError(f"{op} backward received a record from {self.op}")
        if self.saved is None:
            raise UsageError(f"{op} forward ran without recording")
        return self.saved


def expect(record: Record | None, op: str) -> dict[str, Any]:
    if record is None:
        raise UsageError(f"{op} backward requested without a recorded forward")
    return record.expect(op)
