"""
Unit Test Fixtures and Configuration

TESTING APPROACH:
- Provides stub interfaces for isolated unit testing
- No files or external dependencies
- Seeded random generators so every numeric test is reproducible

DESIGN PATTERNS:
1. Stub Pattern - Fake implementations of interfaces
2. Fixture Pattern - Reusable test setup
3. Test Data Builder - Small configurations for fast runs

ARCHITECTURE:
Stubs replace the file stores for isolated operation testing.
"""

import numpy as np
import pytest

from scancap.operations.precision import PRECISION_ENV


# ============================================================================
# Stub Fixtures
# ============================================================================


@pytest.fixture
def manifest_stub():
    """
    Provide ManifestStub instance for testing.

    RETURNS: In-memory implementation of the manifest interface
    SCOPE: function - new instance per test
    """
    from scancap.tests.stubs.manifest_stub import ManifestStub

    return ManifestStub()


@pytest.fixture
def checkpoint_stub():
    """
    Provide CheckpointStub instance for testing.

    RETURNS: In-memory implementation of the checkpoint interface
    SCOPE: function - new instance per test
    """
    from scancap.tests.stubs.checkpoint_stub import CheckpointStub

    return CheckpointStub()


@pytest.fixture
def report_stub():
    """
    Provide ReportStub instance for testing.

    RETURNS: Implementation of the report interface that keeps rows in memory
    SCOPE: function - new instance per test
    """
    from scancap.tests.stubs.report_stub import ReportStub

    return ReportStub()


# ============================================================================
# Numeric Fixtures
# ============================================================================


@pytest.fixture
def rng():
    """Seeded generator; a fresh stream per test."""
    return np.random.default_rng(20240917)


@pytest.fixture
def float64(monkeypatch):
    """Run the test at 64-bit compute precision."""
    monkeypatch.setenv(PRECISION_ENV, "64")


# ============================================================================
# Sample Data Fixtures
# ============================================================================


@pytest.fixture
def tiny_run_config(tmp_path):
    """
    Provide a RunConfig small enough to train in seconds.

    RETURNS: RunConfig with 8x8 frames, 4 frames per video, d=8, one layer
    USAGE: For testing training, evaluation and ablation plumbing
    """
    from scancap.operations.config import load_config

    return load_config(
        overrides=[
            "data.n_train=6",
            "data.n_eval=3",
            "data.frames=4",
            "data.height=8",
            "data.width=8",
            "data.patch=4",
            "encoder.d_semantic=3",
            "encoder.d_detail=2",
            "ahbs.pathways=2",
            "ahbs.spatial_pool=1",
            "ahbs.d_model=8",
            "model.d=8",
            "model.layers=1",
            "model.state_dim=2",
            "model.conv_width=2",
            "train.epochs=1",
            "train.batch=4",
            "eval.max_len=4",
            "ablate.seeds=[0]",
        ],
        out=str(tmp_path),
    )
