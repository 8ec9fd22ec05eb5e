"""
Integration tests for the CSV scene manifest.

TESTING PHILOSOPHY:
- Integration tests verify the file layer works correctly
- Unit tests (with stubs) verify the operations
- Different concerns, different test types

PATTERNS SHOWCASED:
1. State-based Testing - Verify file contents after writes
2. Error Injection - Corrupt files on disk, expect located errors
"""

import pytest

from scancap.operations.errors import DataError
from scancap.operations.synthdata import caption_of, make_dataset
from scancap.store.manifest_store import ManifestFile


@pytest.mark.integration
@pytest.mark.store
class TestManifestRoundTrip:
    """
    Integration tests for writing and reading manifests.

    SCOPE: ManifestFile.write, read_all, read_by_seed
    """

    def test_round_trip(self, manifest_file, sample_scenes):
        manifest_file.write(sample_scenes, 16, 32, 32)

        scenes, geometry = manifest_file.read_all()

        assert scenes == sample_scenes
        assert geometry == (16, 32, 32)

    def test_file_layout(self, manifest_file, sample_scenes):
        manifest_file.write(sample_scenes[:1], 16, 32, 32)

        lines = manifest_file.path.read_text(encoding="utf-8").splitlines()

        assert lines[0] == "# scancap-manifest v1 frames=16 height=32 width=32"
        assert lines[1].startswith("sample_seed,shape,color")
        assert lines[2].endswith(caption_of(sample_scenes[0]))
        assert len(lines) == 3

    def test_make_dataset_writes_through(self, manifest_file):
        scenes = make_dataset(4, 9, 8, 16, 16, manifest_file)

        assert manifest_file.read_all() == (scenes, (8, 16, 16))

    def test_read_by_seed(self, manifest_file, sample_scenes):
        manifest_file.write(sample_scenes, 16, 32, 32)

        scene = manifest_file.read_by_seed(sample_scenes[5].sample_seed)

        assert scene == sample_scenes[5]

    def test_unknown_seed(self, manifest_file, sample_scenes):
        manifest_file.write(sample_scenes, 16, 32, 32)

        with pytest.raises(DataError, match="sample seed 7"):
            manifest_file.read_by_seed(7)


@pytest.mark.integration
@pytest.mark.store
class TestManifestErrors:
    """
    Integration tests for malformed manifests.

    PATTERN: Write a valid file, corrupt one line, read it back
    """

    def corrupt(self, manifest_file, scenes, line, old, new):
        manifest_file.write(scenes, 16, 32, 32)
        lines = manifest_file.path.read_text(encoding="utf-8").splitlines()
        lines[line] = lines[line].replace(old, new, 1)
        manifest_file.path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_missing_file(self, manifest_file):
        with pytest.raises(DataError, match="does not exist"):
            manifest_file.read_all()

    def test_bad_header(self, manifest_file, sample_scenes):
        self.corrupt(manifest_file, sample_scenes, 0, "v1", "v2")

        with pytest.raises(DataError, match=":1:"):
            manifest_file.read_all()

    def test_bad_columns(self, manifest_file, sample_scenes):
        self.corrupt(manifest_file, sample_scenes, 1, "color", "colour")

        with pytest.raises(DataError, match=":2:"):
            manifest_file.read_all()

    def test_bad_field_reports_line(self, manifest_file, sample_scenes):
        self.corrupt(manifest_file, sample_scenes, 3, sample_scenes[1].shape, "hexagon")

        with pytest.raises(DataError, match=r":4: bad shape"):
            manifest_file.read_all()

    def test_caption_mismatch(self, manifest_file, sample_scenes):
        self.corrupt(manifest_file, sample_scenes, 2, " moves ", " drifts ")

        with pytest.raises(DataError, match="does not match"):
            manifest_file.read_all()

    def test_extra_field(self, manifest_file, sample_scenes):
        self.corrupt(manifest_file, sample_scenes, 2, caption_of(sample_scenes[0]), "x,y")

        with pytest.raises(DataError, match="more fields"):
            manifest_file.read_all()

    def test_empty_manifest(self, manifest_file):
        manifest_file.write([], 16, 32, 32)

        with pytest.raises(DataError, match="no scenes"):
            manifest_file.read_all()
