"""
Test suite for artifact writers and run manifests
"""

import json

import numpy as np
import pandas as pd
import pytest

from app.monitoring import finish_manifest, record_outputs, sha256_file, start_manifest
from app.reports import collect_artifacts, frame_series, loglog_svg, render_html, write_csv, write_json


@pytest.mark.unit
class TestWriters:
    """Test cases for CSV, JSON and SVG output"""

    def test_csv_float_format(self, tmp_path):
        """Test the fixed float format"""
        path = write_csv(pd.DataFrame({"lambda": [0.1], "upper": [1 / 3]}), tmp_path / "t.csv")
        assert path.read_text() == "lambda,upper\n0.1,0.333333333333\n"

    def test_json_accepts_models(self, tmp_path):
        """Test that pydantic models are dumped in JSON mode"""
        from speedchange.fitting import LinearFit

        path = write_json(LinearFit(slope=1.0, intercept=0.0, r2=1.0), tmp_path / "fit.json")
        with open(path) as f:
            assert json.load(f) == {"slope": 1.0, "intercept": 0.0, "r2": 1.0}

    def test_svg_drops_nonpositive_points(self):
        """Test that log axes skip data they cannot show"""
        svg = loglog_svg({"a": ([0.0, -1.0], [1.0, 2.0])}, "t", "x", "y")
        assert "no positive data" in svg
        svg = loglog_svg({"a": ([1e-3, 1e-2], [2.0, 1.0]), "b": ([1e-3], [float("nan")])}, "t", "x", "y")
        assert svg.count("<polyline") == 1

    def test_frame_series_skips_missing_columns(self):
        """Test series extraction from a table"""
        frame = pd.DataFrame({"t": [1.0, 2.0], "D_0": [2.0, 2.1]})
        series = frame_series(frame, "t", ["D_0", "D_1"])
        assert list(series) == ["D_0"]
        assert np.array_equal(series["D_0"][1], np.array([2.0, 2.1]))


@pytest.mark.unit
class TestBundle:
    """Test cases for collecting and rendering artifacts"""

    def test_collect_and_render(self, tmp_path):
        """Test that every artifact kind is collected and rendered"""
        write_json({"model": "ssep"}, tmp_path / "validation.json")
        write_csv(pd.DataFrame({"t": range(60)}), tmp_path / "long.csv")
        (tmp_path / "chart.svg").write_text("<svg></svg>")
        (tmp_path / "report.json").write_text("{}")
        bundle = collect_artifacts(tmp_path)
        assert list(bundle["json"]) == ["validation.json"]
        assert list(bundle["csv"]) == ["long.csv"]
        assert list(bundle["svg"]) == ["chart.svg"]
        page = render_html(bundle)
        assert "10 further rows in long.csv" in page
        assert "<svg></svg>" in page


@pytest.mark.unit
class TestManifest:
    """Test cases for run manifests"""

    def test_model_file_is_hashed(self, tmp_path):
        """Test provenance of model files and outputs"""
        model_file = tmp_path / "model.json"
        model_file.write_text('{"d": 1}')
        manifest = start_manifest("validate", ["validate", str(model_file)], {"param": None}, str(model_file))
        assert manifest.model_sha256 == sha256_file(model_file)
        artifact = write_json({"ok": True}, tmp_path / "out" / "validation.json")
        record_outputs(manifest, [artifact])
        target = finish_manifest(manifest, tmp_path / "out", 0)
        assert target.name == "manifest_validate.json"
        with open(target) as f:
            document = json.load(f)
        assert document["exit_code"] == 0
        assert document["outputs"][0]["size_bytes"] == artifact.stat().st_size
        assert document["finished_at"] is not None

    def test_builtin_model_has_no_hash(self):
        """Test that builtin names are not treated as files"""
        manifest = start_manifest("flux", ["flux", "ssep"], {}, "ssep")
        assert manifest.model_file is None
        assert manifest.host.python
