"""
Tests for the file_manager module.
"""

import json
import os

import pandas as pd
import pytest
import yaml

from file_manager import FileManager

pytestmark = pytest.mark.unit


class TestFileManagerInit:
    """Tests for FileManager initialization."""

    def test_init_creates_directory(self, temp_output_dir):
        """Test that initialization creates the output directory."""
        output_path = os.path.join(temp_output_dir, "results", "nested")
        FileManager(output_path)
        assert os.path.isdir(output_path)

    def test_init_with_existing_directory(self, temp_output_dir):
        """Test initialization with existing directory."""
        fm = FileManager(temp_output_dir)
        assert fm.output_dir == temp_output_dir


class TestSanitizeFilename:
    """Tests for filename sanitization."""

    def test_replaces_unsafe_characters(self, temp_output_dir):
        """Test that path separators and wildcards are replaced."""
        fm = FileManager(temp_output_dir)
        assert fm._sanitize_filename('a/b\\c*?.json') == 'a_b_c__.json'

    def test_replaces_spaces(self, temp_output_dir):
        """Test that spaces become underscores."""
        fm = FileManager(temp_output_dir)
        assert fm._sanitize_filename('route result.json') == 'route_result.json'

    def test_empty_name(self, temp_output_dir):
        """Test that an empty or dot-only name gets a placeholder."""
        fm = FileManager(temp_output_dir)
        assert fm._sanitize_filename('') == 'result'
        assert fm._sanitize_filename('..') == 'result'

    def test_long_name_is_truncated(self, temp_output_dir):
        """Test that very long names are cut to 200 characters."""
        fm = FileManager(temp_output_dir)
        assert len(fm._sanitize_filename('x' * 500)) == 200


class TestSaveJson:
    """Tests for JSON output."""

    def test_save_json(self, temp_output_dir):
        """Test that a document is written with sorted keys."""
        fm = FileManager(temp_output_dir)
        path = fm.save_json({"verdict": "Admissible", "certificates": []}, "check.json")
        assert path == os.path.join(temp_output_dir, "check.json")
        with open(path, encoding="utf-8") as f:
            text = f.read()
        assert json.loads(text) == {"verdict": "Admissible", "certificates": []}
        assert text.index("certificates") < text.index("verdict")

    def test_existing_file_is_not_overwritten(self, temp_output_dir):
        """Test that a second save gets a numeric suffix."""
        fm = FileManager(temp_output_dir)
        first = fm.save_json({"run": 1}, "route.json")
        second = fm.save_json({"run": 2}, "route.json")
        third = fm.save_json({"run": 3}, "route.json")
        assert os.path.basename(second) == "route_1.json"
        assert os.path.basename(third) == "route_2.json"
        with open(first, encoding="utf-8") as f:
            assert json.load(f) == {"run": 1}

    def test_unserialisable_data(self, temp_output_dir):
        """Test that a failed save returns None."""
        fm = FileManager(temp_output_dir)
        assert fm.save_json({"bad": object()}, "bad.json") is None


class TestSaveCsv:
    """Tests for CSV output."""

    def test_save_csv(self, temp_output_dir):
        """Test that a frame round-trips without an index column."""
        fm = FileManager(temp_output_dir)
        frame = pd.DataFrame({"arm": ["achievability"], "n": [8], "pe": [0.03]})
        path = fm.save_csv(frame, "curve.csv")
        loaded = pd.read_csv(path)
        assert list(loaded.columns) == ["arm", "n", "pe"]
        assert loaded.loc[0, "n"] == 8


class TestSaveMetadata:
    """Tests for the run sidecar."""

    def test_save_metadata(self, temp_output_dir):
        """Test that command, options and date are recorded."""
        fm = FileManager(temp_output_dir)
        path = fm.save_metadata("simulate", {"seed": 7, "workers": 2})
        assert os.path.basename(path) == "run.yaml"
        with open(path, encoding="utf-8") as f:
            metadata = yaml.safe_load(f)
        assert metadata["command"] == "simulate"
        assert metadata["options"] == {"seed": 7, "workers": 2}
        assert "date_run" in metadata
