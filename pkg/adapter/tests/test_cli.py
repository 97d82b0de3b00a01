"""dfsim-extract command-line contract."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

torch = pytest.importorskip("torch")

from dfsim_adapter.cli import main

TOYS = Path(__file__).resolve().parent.parent / "src" / "dfsim_adapter" / "toys.py"


class TestExtractCommand:
    def test_torch_factory_from_file(self, tmp_path, capsys):
        out = tmp_path / "graph.json"
        report_path = tmp_path / "report.json"
        rc = main(
            [
                "--input", f"{TOYS}:make_tiny_cnn",
                "--format", "torch",
                "--out", str(out),
                "--report", str(report_path),
            ]
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["format_version"] == 1
        assert len(doc["nodes"]) > 5
        report = json.loads(report_path.read_text())
        assert report["emitted_total"] + len(report["dropped"]) == report["source_nodes"]
        assert "nodes emitted" in capsys.readouterr().out

    def test_extracted_graph_passes_dfsim_validate(self, tmp_path):
        out = tmp_path / "graph.json"
        assert main(["--input", f"{TOYS}:make_tiny_mlp", "--format", "torch", "--out", str(out)]) == 0
        result = subprocess.run(
            [sys.executable, "-m", "dfsim.cli", "validate", "--graph", str(out)],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0, result.stderr

    def test_module_path_factory(self, tmp_path):
        out = tmp_path / "graph.json"
        rc = main(["--input", "dfsim_adapter.toys:make_tiny_mlp", "--format", "torch", "--out", str(out)])
        assert rc == 0

    def test_missing_file_exit_two(self, tmp_path, capsys):
        rc = main(["--input", "/no/such/file.py:make_x", "--format", "torch", "--out", str(tmp_path / "g.json")])
        assert rc == 2

    def test_bad_factory_spec_exit_two(self, tmp_path):
        rc = main(["--input", "no-colon-here", "--format", "torch", "--out", str(tmp_path / "g.json")])
        assert rc == 2

    def test_wrong_stage_for_format_exit_two(self, tmp_path):
        rc = main(
            [
                "--input", f"{TOYS}:make_tiny_mlp",
                "--format", "torch",
                "--stage", "graphdef",
                "--out", str(tmp_path / "g.json"),
            ]
        )
        assert rc == 2
