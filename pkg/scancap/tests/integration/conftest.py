"""
Integration test fixtures.

DESIGN PATTERNS IMPLEMENTED:
1. Temporary Directory Pattern - Real files under pytest's tmp_path
2. Dependency Injection - Fixtures hand real stores to the tests
3. Fixture Factory Pattern - Builders for scenes and tensors

ARCHITECTURE:
- Stores read and write real files, nothing is mocked
- Each test gets a fresh directory, so there is no cross-test state
"""

import numpy as np
import pytest

from scancap.operations.synthdata import make_dataset
from scancap.store.checkpoint_store import CheckpointFile
from scancap.store.manifest_store import ManifestFile
from scancap.store.report_store import CsvReport


# ============================================================================
# STORE FIXTURES - Dependency Injection Pattern
# ============================================================================


@pytest.fixture
def manifest_file(tmp_path) -> ManifestFile:
    """Manifest store backed by a file that does not exist yet."""
    return ManifestFile(tmp_path / "data" / "manifest.csv")


@pytest.fixture
def checkpoint_file(tmp_path) -> CheckpointFile:
    """Checkpoint store backed by a file that does not exist yet."""
    return CheckpointFile(tmp_path / "model.ckpt")


@pytest.fixture
def csv_report(tmp_path) -> CsvReport:
    """Report store writing into a fresh directory."""
    return CsvReport(tmp_path / "reports")


# ============================================================================
# TEST DATA FACTORIES - Factory Pattern
# ============================================================================


@pytest.fixture
def sample_scenes():
    """
    Provide a small reproducible list of scenes.

    USAGE: Covers every event type at 16 frames of 32 x 32
    """
    return make_dataset(12, 3, 16, 32, 32)


@pytest.fixture
def tensor_factory():
    """
    Factory for named tensor maps.

    USAGE:
        tensors = tensor_factory()                 # default shapes
        tensors = tensor_factory({"w": (2, 3)})    # custom shapes
    """

    def _create(shapes: dict[str, tuple[int, ...]] | None = None, seed: int = 0):
        rng = np.random.default_rng(seed)
        shapes = shapes or {"embedding": (23, 4), "blocks.0.ssm.D": (8,), "scalar": ()}
        return {name: rng.normal(size=shape).astype(np.float32) for name, shape in shapes.items()}

    return _create
