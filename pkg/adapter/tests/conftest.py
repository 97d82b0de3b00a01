"""Adapter test helpers: validation through the simulator's CLI boundary."""

from __future__ import annotations

import json
import subprocess
import sys


def validate_with_dfsim(doc: dict, tmp_path) -> subprocess.CompletedProcess:
    """Run `dfsim validate` on a document; the CLI is the only coupling."""
    path = tmp_path / "extracted.json"
    path.write_text(json.dumps(doc, indent=2))
    return subprocess.run(
        [sys.executable, "-m", "dfsim.cli", "validate", "--graph", str(path)],
        capture_output=True,
        text=True,
    )
