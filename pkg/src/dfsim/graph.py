"""Unified dataflow-graph data model, file format, validation, and graph algorithms.

The graph is the simulation blueprint: a DAG of typed op nodes with
tensor-shaped outputs and device placements. Instances are treated as
immutable after construction; nothing in this module mutates a graph
in place.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

from .errors import CycleError, GraphFormatError, GraphFormatWarning, MissingDurationError

FORMAT_VERSION = 1

COMPUTE = "Compute"
TRANSFER = "Transfer"
COLLECTIVE = "Collective"
NODE_KINDS = (COMPUTE, TRANSFER, COLLECTIVE)

DEVICE_COMPUTE = "Compute"
DEVICE_LINK = "Link"
DEVICE_COLLECTIVE = "CollectiveResource"
DEVICE_KINDS = (DEVICE_COMPUTE, DEVICE_LINK, DEVICE_COLLECTIVE)

Scalar = int | float | str


@dataclass(frozen=True)
class TensorShape:
    """Shape of one output tensor: element counts per axis plus element width.

    ``dims`` may be empty (a scalar tensor); every dim is >= 0.
    """

    dims: tuple[int, ...]
    dtype_bytes: int = 4

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if any(d < 0 for d in self.dims):
            raise ValueError(f"negative dimension in {self.dims}")
        if self.dtype_bytes <= 0:
            raise ValueError(f"dtype_bytes must be positive, got {self.dtype_bytes}")

    def num_elements(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n

    def byte_size(self) -> int:
        return self.dtype_bytes * self.num_elements()


@dataclass(frozen=True)
class DeviceSpec:
    """One independently executing resource: a compute device, a link, or a
    synthetic collective fabric.

    Link and CollectiveResource specs carry a positive throughput (MB/s) and a
    nonnegative latency (microseconds); Compute specs carry neither.
    """

    id: str
    kind: str
    hardware: str = ""
    throughput_mbps: float | None = None
    latency_us: float = 0.0

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ValueError(f"unknown device kind {self.kind!r}")
        if self.kind == DEVICE_COMPUTE:
            if self.throughput_mbps is not None:
                raise ValueError(f"Compute device {self.id!r} must not carry throughput")
        else:
            if self.throughput_mbps is None or self.throughput_mbps <= 0:
                raise ValueError(f"{self.kind} device {self.id!r} needs positive throughput")
            if self.latency_us < 0:
                raise ValueError(f"{self.kind} device {self.id!r} has negative latency")


@dataclass(frozen=True)
class OpNode:
    """One atomic framework-level op: the unit of profiling and simulation."""

    id: str
    op_type: str
    device: str
    kind: str = COMPUTE
    attrs: dict[str, Scalar] = field(default_factory=dict)
    inputs: tuple[tuple[str, int], ...] = ()
    output_shapes: tuple[TensorShape, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be nonempty")
        if ":" in self.id:
            raise ValueError(f"node id {self.id!r} must not contain ':'")
        if self.kind not in NODE_KINDS:
            raise ValueError(f"node {self.id!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple((str(p), int(s)) for p, s in self.inputs))
        object.__setattr__(self, "output_shapes", tuple(self.output_shapes))


@dataclass
class DataflowGraph:
    """DAG of op nodes keyed by id, with the device table and run metadata.

    Immutable by contract once constructed: safe for any number of
    concurrent readers.
    """

    nodes: dict[str, OpNode]
    devices: dict[str, DeviceSpec]
    metadata: dict[str, Scalar] = field(default_factory=dict)

    def successors(self) -> dict[str, list[str]]:
        """Consumer ids per producer, with multiplicity, consumers sorted by id."""
        succ: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for node in self.nodes.values():
            for pid, _slot in node.inputs:
                if pid in succ:
                    succ[pid].append(node.id)
        for nid in succ:
            succ[nid].sort()
        return succ

    def in_degree(self) -> dict[str, int]:
        """Input-reference count per node (duplicate edges count per reference)."""
        return {nid: len(node.inputs) for nid, node in self.nodes.items()}


@dataclass(frozen=True)
class ValidationFinding:
    code: str
    message: str
    nodes: tuple[str, ...] = ()


@dataclass
class ValidationReport:
    findings: list[ValidationFinding] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.findings

    def add(self, code: str, message: str, nodes: tuple[str, ...] = ()):
        self.findings.append(ValidationFinding(code, message, nodes))


def make_graph(
    nodes: list[OpNode],
    devices: list[DeviceSpec],
    metadata: dict[str, Scalar] | None = None,
) -> DataflowGraph:
    """Build a graph from node/device lists, rejecting duplicate ids."""
    node_map: dict[str, OpNode] = {}
    for node in nodes:
        if node.id in node_map:
            raise GraphFormatError(f"duplicate node id {node.id!r}")
        node_map[node.id] = node
    device_map: dict[str, DeviceSpec] = {}
    for dev in devices:
        if dev.id in device_map:
            raise GraphFormatError(f"duplicate device id {dev.id!r}")
        device_map[dev.id] = dev
    return DataflowGraph(nodes=node_map, devices=device_map, metadata=dict(metadata or {}))


# --- document format -------------------------------------------------------

_NODE_REQUIRED = ("id", "op", "kind", "device")
_KNOWN_NODE_FIELDS = set(_NODE_REQUIRED) | {"attrs", "inputs", "output_shapes"}
_KNOWN_TOP_FIELDS = {"format_version", "metadata", "devices", "nodes"}
_KNOWN_DEVICE_FIELDS = {"id", "kind", "hardware", "throughput_mbps", "latency_us"}


def _major_version(value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise GraphFormatError(f"format_version must be an integer, got {value!r}")
    try:
        return int(str(value).split(".", 1)[0])
    except ValueError:
        raise GraphFormatError(f"unparseable format_version {value!r}") from None


def parse_graph(text: str) -> DataflowGraph:
    """Parse a unified-format graph document.

    Unknown document fields are ignored with a :class:`GraphFormatWarning`;
    structural problems (syntax, missing fields, duplicate ids, dangling
    input references) raise :class:`GraphFormatError`. Cycles are not
    checked here; they are findings for :func:`validate`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"syntax error: {exc.msg}", location=f"line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be an object")
    if "format_version" not in doc:
        raise GraphFormatError("missing required field 'format_version'")
    major = _major_version(doc["format_version"])
    if major != FORMAT_VERSION:
        raise GraphFormatError(f"unsupported graph format major version {major}")

    for key in sorted(set(doc) - _KNOWN_TOP_FIELDS):
        warnings.warn(f"ignoring unknown graph field {key!r}", GraphFormatWarning, stacklevel=2)

    devices = []
    for i, dev in enumerate(doc.get("devices", [])):
        loc = f"devices[{i}]"
        if not isinstance(dev, dict) or "id" not in dev or "kind" not in dev:
            raise GraphFormatError("device entry needs 'id' and 'kind'", location=loc)
        for key in sorted(set(dev) - _KNOWN_DEVICE_FIELDS):
            warnings.warn(f"ignoring unknown device field {key!r}", GraphFormatWarning, stacklevel=2)
        try:
            devices.append(
                DeviceSpec(
                    id=dev["id"],
                    kind=dev["kind"],
                    hardware=dev.get("hardware", ""),
                    throughput_mbps=dev.get("throughput_mbps"),
                    latency_us=dev.get("latency_us", 0.0),
                )
            )
        except ValueError as exc:
            raise GraphFormatError(str(exc), location=loc) from exc

    nodes = []
    for i, nd in enumerate(doc.get("nodes", [])):
        loc = f"nodes[{i}]"
        if not isinstance(nd, dict):
            raise GraphFormatError("node entry must be an object", location=loc)
        for fieldname in _NODE_REQUIRED:
            if fieldname not in nd:
                raise GraphFormatError(f"missing required node field {fieldname!r}", location=loc)
        for key in sorted(set(nd) - _KNOWN_NODE_FIELDS):
            warnings.warn(f"ignoring unknown node field {key!r}", GraphFormatWarning, stacklevel=2)
        loc = f"nodes[{i}] ({nd['id']!r})"
        inputs = []
        for ref in nd.get("inputs", []):
            if not isinstance(ref, str) or ":" not in ref:
                raise GraphFormatError(f"input reference {ref!r} is not 'nodeId:slot'", location=loc)
            pid, _, slot = ref.rpartition(":")
            try:
                inputs.append((pid, int(slot)))
            except ValueError:
                raise GraphFormatError(f"input reference {ref!r} has non-integer slot", location=loc) from None
        shapes = []
        for sh in nd.get("output_shapes", []):
            if not isinstance(sh, dict) or "dims" not in sh:
                raise GraphFormatError(f"output shape {sh!r} needs 'dims'", location=loc)
            try:
                shapes.append(TensorShape(dims=tuple(sh["dims"]), dtype_bytes=sh.get("dtype_bytes", 4)))
            except (TypeError, ValueError) as exc:
                raise GraphFormatError(f"bad output shape: {exc}", location=loc) from exc
        try:
            nodes.append(
                OpNode(
                    id=nd["id"],
                    op_type=nd["op"],
                    kind=nd["kind"],
                    device=nd["device"],
                    attrs=dict(nd.get("attrs", {})),
                    inputs=tuple(inputs),
                    output_shapes=tuple(shapes),
                )
            )
        except (TypeError, ValueError) as exc:
            raise GraphFormatError(str(exc), location=loc) from exc

    graph = make_graph(nodes, devices, doc.get("metadata", {}))

    # Structural completeness: every input names an existing node and slot.
    for node in graph.nodes.values():
        for pid, slot in node.inputs:
            if pid not in graph.nodes:
                raise GraphFormatError(
                    f"node {node.id!r} references missing producer {pid!r}", location=node.id
                )
            if not (0 <= slot < max(1, len(graph.nodes[pid].output_shapes))):
                raise GraphFormatError(
                    f"node {node.id!r} references slot {slot} of {pid!r} "
                    f"which has {len(graph.nodes[pid].output_shapes)} outputs",
                    location=node.id,
                )
    return graph


def serialize_graph(g: DataflowGraph) -> str:
    """Render a graph back to its unified-format document."""
    doc = {
        "format_version": FORMAT_VERSION,
        "metadata": dict(g.metadata),
        "devices": [_device_to_doc(d) for d in g.devices.values()],
        "nodes": [
            {
                "id": n.id,
                "op": n.op_type,
                "kind": n.kind,
                "device": n.device,
                "attrs": dict(n.attrs),
                "inputs": [f"{pid}:{slot}" for pid, slot in n.inputs],
                "output_shapes": [
                    {"dims": list(s.dims), "dtype_bytes": s.dtype_bytes} for s in n.output_shapes
                ],
            }
            for n in g.nodes.values()
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def _device_to_doc(d: DeviceSpec) -> dict:
    doc: dict = {"id": d.id, "kind": d.kind, "hardware": d.hardware}
    if d.kind != DEVICE_COMPUTE:
        doc["throughput_mbps"] = d.throughput_mbps
        doc["latency_us"] = d.latency_us
    return doc


# --- validation ------------------------------------------------------------


def validate(g: DataflowGraph) -> ValidationReport:
    """Check every graph invariant; findings are data, not failures."""
    report = ValidationReport()
    for node in g.nodes.values():
        if node.device not in g.devices:
            report.add(
                "unknown-device",
                f"node {node.id!r} placed on unknown device {node.device!r}",
                (node.id,),
            )
        for pid, slot in node.inputs:
            if pid not in g.nodes:
                report.add(
                    "dangling-input",
                    f"node {node.id!r} references missing producer {pid!r}",
                    (node.id,),
                )
            elif not (0 <= slot < max(1, len(g.nodes[pid].output_shapes))):
                report.add(
                    "bad-slot",
                    f"node {node.id!r} references invalid slot {slot} of {pid!r}",
                    (node.id,),
                )
        if node.kind == COLLECTIVE:
            group = node.attrs.get("group")
            if not isinstance(group, (list, tuple)) or len(group) < 2:
                report.add(
                    "collective-attrs",
                    f"collective {node.id!r} needs attr 'group' with >= 2 devices",
                    (node.id,),
                )
            if not _positive_number(node.attrs.get("bytes")):
                report.add(
                    "collective-attrs",
                    f"collective {node.id!r} needs attr 'bytes' > 0",
                    (node.id,),
                )
        if node.kind == TRANSFER:
            src, dst = node.attrs.get("src_device"), node.attrs.get("dst_device")
            if src is None or dst is None or src == dst:
                report.add(
                    "transfer-attrs",
                    f"transfer {node.id!r} needs distinct 'src_device' and 'dst_device'",
                    (node.id,),
                )
            if not _positive_number(node.attrs.get("bytes")):
                report.add(
                    "transfer-attrs",
                    f"transfer {node.id!r} needs attr 'bytes' > 0",
                    (node.id,),
                )
    cycle = _find_cycle(g)
    if cycle:
        report.add("cycle", "graph contains a cycle: " + " -> ".join(cycle), tuple(cycle))
    return report


def _positive_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0


def _find_cycle(g: DataflowGraph) -> list[str] | None:
    """Return the node ids of one cycle, or None. Iterative DFS, id-ordered."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in g.nodes}
    succ = g.successors()
    for start in sorted(g.nodes):
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(start, 0)]
        path = [start]
        color[start] = GRAY
        while stack:
            nid, idx = stack[-1]
            if idx < len(succ[nid]):
                stack[-1] = (nid, idx + 1)
                nxt = succ[nid][idx]
                if color[nxt] == GRAY:
                    return path[path.index(nxt):]
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, 0))
                    path.append(nxt)
            else:
                color[nid] = BLACK
                stack.pop()
                path.pop()
    return None


# --- graph algorithms ------------------------------------------------------


def topological_order(g: DataflowGraph) -> list[str]:
    """Kahn's algorithm with a heap: ties broken by lexicographic node id."""
    import heapq

    indeg = g.in_degree()
    succ = g.successors()
    heap = sorted(nid for nid, d in indeg.items() if d == 0)
    heapq.heapify(heap)
    order = []
    while heap:
        nid = heapq.heappop(heap)
        order.append(nid)
        for nxt in succ[nid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(heap, nxt)
    if len(order) != len(g.nodes):
        cycle = _find_cycle(g)
        raise CycleError(cycle or [nid for nid, d in indeg.items() if d > 0])
    return order


def critical_path(
    g: DataflowGraph, durations: dict[str, float]
) -> tuple[float, list[str]]:
    """Longest source-to-sink path weighted by node durations.

    Returns the path length and the lexicographically smallest realizing
    path. Durations must be total over the graph and nonnegative.
    """
    missing = sorted(nid for nid in g.nodes if nid not in durations)
    if missing:
        raise MissingDurationError(missing)
    if not g.nodes:
        return 0.0, []

    order = topological_order(g)
    succ = g.successors()
    # suffix[v]: max total duration of a path starting at v
    suffix: dict[str, float] = {}
    for nid in reversed(order):
        best = 0.0
        for nxt in succ[nid]:
            if suffix[nxt] > best:
                best = suffix[nxt]
        suffix[nid] = durations[nid] + best

    indeg = g.in_degree()
    sources = [nid for nid in order if indeg[nid] == 0]
    length = max(suffix[s] for s in sources)
    start = min(s for s in sources if suffix[s] == length)

    # Walk forward greedily; front-greedy min-id choice yields the
    # lexicographically smallest maximal path. Compare stored suffix values
    # only: recomputing them by subtraction is not float-exact.
    path = [start]
    node = start
    while succ[node]:
        best = max(suffix[s] for s in succ[node])
        node = min(s for s in succ[node] if suffix[s] == best)
        path.append(node)
    return length, path
