"""Unified graph document construction and the extraction report.

This package talks to the simulator only through its file format, so the
document is assembled here by hand rather than importing the simulator's
types. Field layout mirrors the format documentation: top-level
format_version/metadata/devices/nodes, nodes with id/op/kind/device/attrs/
inputs/output_shapes, inputs as "nodeId:slot" strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FORMAT_VERSION = 1


@dataclass
class ExtractedNode:
    id: str
    op_type: str
    device: str
    attrs: dict = field(default_factory=dict)
    inputs: list[tuple[str, int]] = field(default_factory=list)
    output_shapes: list[tuple[tuple[int, ...], int]] = field(default_factory=list)  # (dims, dtype_bytes)


@dataclass
class ExtractionReport:
    framework: str
    framework_version: str
    source_nodes: int
    emitted_by_kind: dict[str, int] = field(default_factory=dict)
    dropped: list[tuple[str, str]] = field(default_factory=list)  # (node name, reason)

    def emitted_total(self) -> int:
        return sum(self.emitted_by_kind.values())

    def reconciles(self) -> bool:
        """Emitted plus dropped must account for every source node."""
        return self.emitted_total() + len(self.dropped) == self.source_nodes

    def to_json(self) -> str:
        doc = {
            "framework": self.framework,
            "framework_version": self.framework_version,
            "source_nodes": self.source_nodes,
            "emitted_by_kind": dict(self.emitted_by_kind),
            "emitted_total": self.emitted_total(),
            "dropped": [{"node": name, "reason": reason} for name, reason in self.dropped],
        }
        return json.dumps(doc, indent=2) + "\n"


def drop_dependents(
    nodes: list[ExtractedNode], dropped: dict[str, str]
) -> tuple[list[ExtractedNode], dict[str, str]]:
    """Cascade drops: a node whose producer was dropped cannot be emitted
    (its input reference would dangle), so it is dropped too."""
    dropped = dict(dropped)
    changed = True
    while changed:
        changed = False
        for node in nodes:
            if node.id in dropped:
                continue
            bad = [pid for pid, _slot in node.inputs if pid in dropped]
            if bad:
                dropped[node.id] = f"producer dropped ({bad[0]})"
                changed = True
    return [n for n in nodes if n.id not in dropped], dropped


def build_document(
    nodes: list[ExtractedNode],
    hardware: str,
    metadata: dict | None = None,
) -> dict:
    """Assemble the unified graph document from emitted nodes."""
    devices = sorted({n.device for n in nodes})
    return {
        "format_version": FORMAT_VERSION,
        "metadata": dict(metadata or {}),
        "devices": [{"id": dev, "kind": "Compute", "hardware": hardware} for dev in devices],
        "nodes": [
            {
                "id": n.id,
                "op": n.op_type,
                "kind": "Compute",
                "device": n.device,
                "attrs": dict(n.attrs),
                "inputs": [f"{pid}:{slot}" for pid, slot in n.inputs],
                "output_shapes": [
                    {"dims": list(dims), "dtype_bytes": dtype_bytes}
                    for dims, dtype_bytes in n.output_shapes
                ],
            }
            for n in nodes
        ],
    }


def document_to_text(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def normalize_device(raw: str) -> str:
    """Map framework device strings onto the unified cpu<i>/gpu<i> scheme."""
    if not raw:
        return "cpu0"
    lowered = raw.lower()
    index = "0"
    if ":" in raw:
        tail = raw.rsplit(":", 1)[1]
        if tail.isdigit():
            index = tail
    if "gpu" in lowered or "cuda" in lowered:
        return f"gpu{index}"
    return f"cpu{index}"
