"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the library's own algorithms: the
forward-edge checker walks edges directly, the critical-path oracle
enumerates whole paths, and the overlap oracle counts tick membership.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from dfsim.costmodel import SOURCE_OVERRIDE, DurationEntry, DurationTable
from dfsim.graph import COMPUTE, DEVICE_COMPUTE, DataflowGraph, DeviceSpec, OpNode, TensorShape, make_graph

REPO_ROOT = Path(__file__).resolve().parent.parent
SAMPLES = REPO_ROOT / "samples"


@pytest.fixture
def samples_dir() -> Path:
    return SAMPLES


# --- tiny graph builders -----------------------------------------------------


def mk_node(nid, inputs=(), device="gpu0", op="Op", kind=COMPUTE, attrs=None, shapes=None):
    return OpNode(
        id=nid,
        op_type=op,
        device=device,
        kind=kind,
        attrs=dict(attrs or {}),
        inputs=tuple((p, 0) for p in inputs),
        output_shapes=tuple(shapes) if shapes else (TensorShape((4, 4), 4),),
    )


def mk_graph(nodes, extra_devices=(), hardware="test-hw") -> DataflowGraph:
    devices = {}
    for node in nodes:
        if node.device not in devices:
            devices[node.device] = DeviceSpec(id=node.device, kind=DEVICE_COMPUTE, hardware=hardware)
    for dev in extra_devices:
        devices[dev.id] = dev
    return make_graph(list(nodes), list(devices.values()))


def mk_table(durations: dict[str, float], source: str = SOURCE_OVERRIDE) -> DurationTable:
    return DurationTable(entries={nid: DurationEntry(float(d), source) for nid, d in durations.items()})


# --- oracles -----------------------------------------------------------------


def forward_edge_check(g: DataflowGraph, order: list[str]) -> bool:
    """O(E) check: each node appears exactly once and every edge goes forward."""
    if sorted(order) != sorted(g.nodes):
        return False
    pos = {nid: i for i, nid in enumerate(order)}
    for node in g.nodes.values():
        for pid, _slot in node.inputs:
            if pos[pid] >= pos[node.id]:
                return False
    return True


def brute_force_critical_path(g: DataflowGraph, durations: dict[str, float]):
    """Enumerate every source-to-sink path; exponential, for tiny graphs only.

    Returns (max length, lexicographically smallest maximal path).
    """
    succ = {nid: [] for nid in g.nodes}
    indeg = {nid: 0 for nid in g.nodes}
    for node in g.nodes.values():
        for pid, _ in node.inputs:
            succ[pid].append(node.id)
            indeg[node.id] += 1
    sources = sorted(nid for nid, d in indeg.items() if d == 0)

    best_len = None
    best_path = None

    def walk(nid, acc, path):
        nonlocal best_len, best_path
        acc += durations[nid]
        path = path + [nid]
        if not succ[nid]:
            if best_len is None or acc > best_len or (acc == best_len and path < best_path):
                best_len, best_path = acc, path
            return
        for nxt in sorted(set(succ[nid])):
            walk(nxt, acc, path)

    for source in sources:
        walk(source, 0.0, [])
    return best_len or 0.0, best_path or []


def memoized_longest_path(g: DataflowGraph, durations: dict[str, float]) -> float:
    """Memoized-recursion longest path, independent of the library's DP."""
    import sys

    succ = {nid: [] for nid in g.nodes}
    for node in g.nodes.values():
        for pid, _ in node.inputs:
            succ[pid].append(node.id)
    sys.setrecursionlimit(10000 + 10 * len(g.nodes))
    cache: dict[str, float] = {}

    def longest_from(nid: str) -> float:
        if nid not in cache:
            cache[nid] = durations[nid] + max((longest_from(s) for s in succ[nid]), default=0.0)
        return cache[nid]

    return max((longest_from(nid) for nid in g.nodes), default=0.0)


def overlap_tick_oracle(schedule, device_kinds: dict[str, str]) -> float:
    """Per-microsecond membership count of (compute busy AND comm busy).

    Only valid for integer-aligned schedules.
    """
    horizon = int(round(schedule.makespan_us))
    compute = [False] * horizon
    comm = [False] * horizon
    for e in schedule.entries:
        row = compute if device_kinds.get(e.device, "Compute") == "Compute" else comm
        for t in range(int(round(e.start_us)), int(round(e.finish_us))):
            row[t] = True
    return float(sum(1 for c, m in zip(compute, comm) if c and m))
