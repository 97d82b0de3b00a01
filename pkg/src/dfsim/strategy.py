"""Training-strategy expansion: data-parallel replication, allreduce
insertion on gradient tensors, device mapping, and manual duration overrides.

Everything here is a pure function from (graph, config) to new values; input
graphs are never mutated.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass, field

from .costmodel import ALGO_MEASURED, COLLECTIVE_ALGOS, SOURCE_OVERRIDE, DurationEntry, DurationTable
from .errors import ConfigError, DfsimError, MissingDurationError, PatternWarning
from .graph import (
    COLLECTIVE,
    COMPUTE,
    DEVICE_COLLECTIVE,
    DEVICE_COMPUTE,
    DataflowGraph,
    DeviceSpec,
    OpNode,
    validate,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CollectiveConfig:
    algo: str = ALGO_MEASURED
    path: str = "PCIeSwitch"


@dataclass(frozen=True)
class StrategyConfig:
    """Everything about a training run that is not in the graph itself."""

    replicas: int = 1
    device_map: tuple[str, ...] = ()
    collective: CollectiveConfig = CollectiveConfig()
    gradient_markers: tuple[str, ...] = ()
    overrides: dict[str, float] = field(default_factory=dict)
    hardware: str = ""
    op_gap_us: float = 0.0


@dataclass
class ExpandedGraph:
    graph: DataflowGraph
    replica_of: dict[str, tuple[str, int]]
    collective_nodes: list[str]


# --- id patterns -----------------------------------------------------------


def check_pattern(pattern: str):
    """Patterns are a literal id or a prefix followed by one trailing '*'."""
    if not pattern:
        raise ConfigError("empty pattern")
    star = pattern.find("*")
    if star != -1 and star != len(pattern) - 1:
        raise ConfigError(f"pattern {pattern!r}: '*' is only allowed as a trailing glob")


def match_pattern(pattern: str, node_id: str) -> bool:
    if pattern.endswith("*"):
        return node_id.startswith(pattern[:-1])
    return node_id == pattern


def resolve_overrides(overrides: dict[str, float], node_ids: list[str]) -> dict[str, float]:
    """Final override value per node; later-listed patterns win overlaps.

    Patterns that match no node emit a :class:`PatternWarning`.
    """
    resolved: dict[str, float] = {}
    for pattern, value in overrides.items():
        matched = [nid for nid in node_ids if match_pattern(pattern, nid)]
        if not matched:
            warnings.warn(f"override pattern {pattern!r} matched no node", PatternWarning, stacklevel=2)
        for nid in matched:
            resolved[nid] = float(value)
    return resolved


# --- config document -------------------------------------------------------


def parse_config(text: str) -> StrategyConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    major = str(doc.get("format_version", FORMAT_VERSION)).split(".", 1)[0]
    if major != str(FORMAT_VERSION):
        raise ConfigError(f"unsupported config format version {doc.get('format_version')!r}")

    replicas = doc.get("replicas", 1)
    if not isinstance(replicas, int) or replicas < 1:
        raise ConfigError(f"replicas must be an integer >= 1, got {replicas!r}")
    device_map = tuple(doc.get("device_map", ()))
    if device_map and len(device_map) != replicas:
        raise ConfigError(f"device_map has {len(device_map)} entries for {replicas} replicas")
    if replicas > 1 and not device_map:
        raise ConfigError("device_map is required when replicas > 1")
    if len(set(device_map)) != len(device_map):
        raise ConfigError("device_map entries must be distinct")

    coll = doc.get("collective", {})
    algo = coll.get("algo", ALGO_MEASURED)
    if algo not in COLLECTIVE_ALGOS:
        raise ConfigError(f"unknown collective algo {algo!r}; expected one of {COLLECTIVE_ALGOS}")
    collective = CollectiveConfig(algo=algo, path=coll.get("path", "PCIeSwitch"))

    markers = tuple(doc.get("gradient_markers", ()))
    for pattern in markers:
        check_pattern(pattern)
    overrides = dict(doc.get("overrides", {}))
    for pattern, value in overrides.items():
        check_pattern(pattern)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            raise ConfigError(f"override for {pattern!r} must be a duration >= 0, got {value!r}")

    op_gap_us = doc.get("op_gap_us", 0.0)
    if not isinstance(op_gap_us, (int, float)) or op_gap_us < 0:
        raise ConfigError(f"op_gap_us must be >= 0, got {op_gap_us!r}")

    return StrategyConfig(
        replicas=replicas,
        device_map=device_map,
        collective=collective,
        gradient_markers=markers,
        overrides={k: float(v) for k, v in overrides.items()},
        hardware=doc.get("hardware", ""),
        op_gap_us=float(op_gap_us),
    )


def serialize_config(cfg: StrategyConfig) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "replicas": cfg.replicas,
        "device_map": list(cfg.device_map),
        "collective": {"algo": cfg.collective.algo, "path": cfg.collective.path},
        "gradient_markers": list(cfg.gradient_markers),
        "overrides": dict(cfg.overrides),
        "hardware": cfg.hardware,
        "op_gap_us": cfg.op_gap_us,
    }
    return json.dumps(doc, indent=2) + "\n"


# --- data-parallel expansion -------------------------------------------------


def replica_id(node_id: str, k: int) -> str:
    return f"{node_id}@r{k}"


def collective_id(node_id: str) -> str:
    return f"allreduce_{node_id}"


def expand_data_parallel(g: DataflowGraph, cfg: StrategyConfig) -> ExpandedGraph:
    """Clone the graph per replica and insert one allreduce per marked
    gradient node.

    Compute nodes of replica k move to ``device_map[k]`` (when a map is
    given); Transfer/Collective clones keep their device and attrs verbatim.
    The inserted collective consumes slot 0 of every replica's instance of
    the gradient node, carries the gradient tensor's byte size, and feeds
    every consumer that read the gradient in any replica. With one replica
    the result is node-for-node isomorphic to the input (ids gain "@r0")
    and no collectives are inserted.
    """
    replicas = cfg.replicas
    if cfg.device_map and len(cfg.device_map) != replicas:
        raise ConfigError(f"device_map has {len(cfg.device_map)} entries for {replicas} replicas")
    if replicas > 1 and not cfg.device_map:
        raise ConfigError("device_map is required when replicas > 1")

    marked: list[str] = []
    for pattern in cfg.gradient_markers:
        check_pattern(pattern)
        matched = sorted(nid for nid in g.nodes if match_pattern(pattern, nid))
        if not matched:
            warnings.warn(f"gradient marker {pattern!r} matched no node", PatternWarning, stacklevel=2)
        marked.extend(nid for nid in matched if nid not in marked)
    marked.sort()
    for nid in marked:
        if g.nodes[nid].kind != COMPUTE:
            raise ConfigError(f"gradient marker matched {g.nodes[nid].kind} node {nid!r}; only Compute nodes are supported")
        if not g.nodes[nid].output_shapes or g.nodes[nid].output_shapes[0].byte_size() <= 0:
            raise ConfigError(f"gradient node {nid!r} has no positive-size output tensor to reduce")

    nodes: dict[str, OpNode] = {}
    replica_of: dict[str, tuple[str, int]] = {}
    for k in range(replicas):
        for nid in g.nodes:
            node = g.nodes[nid]
            clone_device = node.device
            if cfg.device_map and node.kind == COMPUTE:
                clone_device = cfg.device_map[k]
            cid = replica_id(nid, k)
            nodes[cid] = dataclasses.replace(
                node,
                id=cid,
                device=clone_device,
                inputs=tuple((replica_id(pid, k), slot) for pid, slot in node.inputs),
            )
            replica_of[cid] = (nid, k)

    group = list(cfg.device_map) if cfg.device_map else sorted({n.device for n in nodes.values()})
    collective_path = cfg.collective.path
    collective_device = f"collective:{collective_path}:" + "+".join(group)

    collective_nodes: list[str] = []
    if replicas > 1:
        for gid in marked:
            cid = collective_id(gid)
            if cid in nodes:
                raise DfsimError(f"collective id {cid!r} collides with an existing node")
            grad = g.nodes[gid]
            grad_clones = {replica_id(gid, k) for k in range(replicas)}
            # Rewire every consumer of the gradient tensor to the collective.
            for other_id, other in list(nodes.items()):
                new_inputs = tuple(
                    (cid, slot) if pid in grad_clones else (pid, slot)
                    for pid, slot in other.inputs
                )
                if new_inputs != other.inputs:
                    nodes[other_id] = dataclasses.replace(other, inputs=new_inputs)
            nodes[cid] = OpNode(
                id=cid,
                op_type="AllReduce",
                kind=COLLECTIVE,
                device=collective_device,
                attrs={
                    "group": list(group),
                    "bytes": grad.output_shapes[0].byte_size(),
                    "path": collective_path,
                },
                inputs=tuple((replica_id(gid, k), 0) for k in range(replicas)),
                output_shapes=grad.output_shapes,
            )
            collective_nodes.append(cid)

    inserted = set(collective_nodes)
    devices: dict[str, DeviceSpec] = {}
    for node in nodes.values():
        if node.id in inserted or node.device in devices:
            continue
        if node.device in g.devices:
            devices[node.device] = g.devices[node.device]
        else:
            devices[node.device] = DeviceSpec(id=node.device, kind=DEVICE_COMPUTE, hardware=cfg.hardware)
    if collective_nodes:
        # Serialization token for the shared fabric; timing comes from the
        # profiling database, so the throughput here is nominal.
        devices[collective_device] = DeviceSpec(
            id=collective_device,
            kind=DEVICE_COLLECTIVE,
            hardware=cfg.hardware,
            throughput_mbps=1.0,
            latency_us=0.0,
        )

    metadata = dict(g.metadata)
    metadata["replicas"] = replicas
    expanded = DataflowGraph(nodes=nodes, devices=devices, metadata=metadata)

    report = validate(expanded)
    if not report.ok():
        details = "; ".join(f.message for f in report.findings[:5])
        raise DfsimError(f"internal: expansion produced an invalid graph: {details}")
    return ExpandedGraph(graph=expanded, replica_of=replica_of, collective_nodes=collective_nodes)


def apply_overrides(table: DurationTable, cfg: StrategyConfig, g: DataflowGraph) -> DurationTable:
    """Stamp manual override durations onto a copy of the table.

    The table must already be total over the graph. Unmatched patterns warn;
    overlapping patterns resolve last-listed-wins.
    """
    missing = sorted(nid for nid in g.nodes if nid not in table.entries)
    if missing:
        raise MissingDurationError(missing)
    entries = dict(table.entries)
    for nid, value in resolve_overrides(cfg.overrides, sorted(g.nodes)).items():
        entries[nid] = DurationEntry(value, SOURCE_OVERRIDE)
    return DurationTable(entries=entries)
