"""Deterministic discrete-event replay of a dataflow graph.

Semantics (shared by the event-driven engine and the tick-stepped oracle):
every node holds a dependency counter initialized to its input-reference
count; nodes with no inputs are ready at t=0. Ready nodes are appended to
their device's FIFO queue in (ready time, node id) order. A device runs one
node at a time without preemption, starting each node at
max(device free time, node ready time). When a node finishes, each
successor's counter is decremented (once per referencing input); a counter
reaching zero makes the successor ready at that finish time. The makespan is
the latest finish. All ties break on (time, node id), so identical inputs
produce bit-identical schedules.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field

from .costmodel import DurationTable
from .errors import CycleError, MissingDurationError
from .graph import DataflowGraph


@dataclass(frozen=True)
class ScheduledNode:
    """One node's placement in simulated time; finish is exactly start + duration."""

    node_id: str
    device: str
    start_us: float
    finish_us: float
    source: str
    op_type: str = ""


@dataclass
class Schedule:
    entries: list[ScheduledNode]
    makespan_us: float
    per_device_busy_us: dict[str, float] = field(default_factory=dict)

    def by_node(self) -> dict[str, ScheduledNode]:
        return {e.node_id: e for e in self.entries}

    def to_json(self) -> str:
        """Canonical serialization, used for byte-level determinism checks."""
        doc = {
            "makespan_us": self.makespan_us,
            "per_device_busy_us": dict(sorted(self.per_device_busy_us.items())),
            "entries": [
                [e.node_id, e.device, e.start_us, e.finish_us, e.source, e.op_type]
                for e in self.entries
            ],
        }
        return json.dumps(doc)


def _check_durations(g: DataflowGraph, durations: DurationTable) -> dict[str, float]:
    values = durations.durations()
    missing = sorted(nid for nid in g.nodes if nid not in values)
    if missing:
        raise MissingDurationError(missing)
    return values


def _finalize(
    g: DataflowGraph,
    durations: DurationTable,
    placed: dict[str, tuple[float, float]],
) -> Schedule:
    if len(placed) != len(g.nodes):
        stuck = sorted(set(g.nodes) - set(placed))
        raise CycleError(stuck)
    entries = [
        ScheduledNode(
            node_id=nid,
            device=g.nodes[nid].device,
            start_us=start,
            finish_us=finish,
            source=durations.entries[nid].source,
            op_type=g.nodes[nid].op_type,
        )
        for nid, (start, finish) in placed.items()
    ]
    entries.sort(key=lambda e: (e.start_us, e.device, e.node_id))
    makespan = max((e.finish_us for e in entries), default=0.0)
    busy = {dev: 0.0 for dev in g.devices}
    for e in entries:
        busy[e.device] = busy.get(e.device, 0.0) + (e.finish_us - e.start_us)
    return Schedule(entries=entries, makespan_us=makespan, per_device_busy_us=busy)


def simulate(g: DataflowGraph, durations: DurationTable) -> Schedule:
    """Event-driven list scheduling over per-device FIFO queues."""
    values = _check_durations(g, durations)
    indeg = g.in_degree()
    succ = g.successors()

    queues: dict[str, deque[str]] = {dev: deque() for dev in g.devices}
    for node in g.nodes.values():
        queues.setdefault(node.device, deque())
    device_free: dict[str, float] = {dev: 0.0 for dev in queues}
    device_busy: dict[str, bool] = {dev: False for dev in queues}
    ready_time: dict[str, float] = {}
    placed: dict[str, tuple[float, float]] = {}
    events: list[tuple[float, str, str]] = []  # (finish, node id, device)

    def enqueue(ready: list[str], now: float):
        for nid in sorted(ready):
            ready_time[nid] = now
            queues[g.nodes[nid].device].append(nid)

    def start_idle_devices():
        for dev in sorted(queues):
            if device_busy[dev] or not queues[dev]:
                continue
            nid = queues[dev].popleft()
            start = max(device_free[dev], ready_time[nid])
            finish = start + values[nid]
            placed[nid] = (start, finish)
            device_busy[dev] = True
            heapq.heappush(events, (finish, nid, dev))

    enqueue([nid for nid, d in indeg.items() if d == 0], 0.0)
    start_idle_devices()

    while events:
        now = events[0][0]
        batch: list[tuple[float, str, str]] = []
        while events and events[0][0] == now:
            batch.append(heapq.heappop(events))
        newly_ready: list[str] = []
        for _, nid, dev in sorted(batch, key=lambda e: e[1]):
            device_busy[dev] = False
            device_free[dev] = now
            for nxt in succ[nid]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    newly_ready.append(nxt)
        enqueue(newly_ready, now)
        start_idle_devices()

    return _finalize(g, durations, placed)


def naive_simulate(g: DataflowGraph, durations: DurationTable, tick_us: float = 1.0) -> Schedule:
    """Fixed-timestep reference simulator; oracle twin of :func:`simulate`.

    Applies the identical ready/FIFO/tie-break rules one tick at a time, so
    it is slow but straightforwardly auditable. All durations must be
    integer multiples of the tick.
    """
    if tick_us <= 0:
        raise ValueError(f"tick must be > 0, got {tick_us}")
    values = _check_durations(g, durations)
    dur_ticks: dict[str, int] = {}
    for nid, dur in values.items():
        ticks = round(dur / tick_us)
        if abs(ticks * tick_us - dur) > 1e-9 * max(1.0, abs(dur)):
            raise ValueError(f"duration of {nid!r} ({dur}) is not a multiple of tick {tick_us}")
        dur_ticks[nid] = ticks

    indeg = g.in_degree()
    succ = g.successors()
    queues: dict[str, deque[str]] = {dev: deque() for dev in g.devices}
    for node in g.nodes.values():
        queues.setdefault(node.device, deque())
    running: dict[str, tuple[str, int] | None] = {dev: None for dev in queues}  # (node, finish tick)
    placed: dict[str, tuple[float, float]] = {}
    start_tick: dict[str, int] = {}

    for nid in sorted(nid for nid, d in indeg.items() if d == 0):
        queues[g.nodes[nid].device].append(nid)

    t = 0
    remaining = len(g.nodes)
    # Any tick-aligned schedule fits in sum(durations) ticks plus slack.
    limit = sum(dur_ticks.values()) + len(g.nodes) + 1
    while remaining > 0 and t <= limit:
        # Stabilize within the tick: zero-duration nodes start and finish at
        # the same timestamp, exactly like same-time event batches.
        progress = True
        while progress:
            progress = False
            finished = []
            for dev in sorted(queues):
                run = running[dev]
                if run is not None and run[1] == t:
                    finished.append((run[0], dev))
            newly_ready: list[str] = []
            for nid, dev in sorted(finished):
                running[dev] = None
                placed[nid] = (start_tick[nid] * tick_us, t * tick_us)
                remaining -= 1
                progress = True
                for nxt in succ[nid]:
                    indeg[nxt] -= 1
                    if indeg[nxt] == 0:
                        newly_ready.append(nxt)
            for nid in sorted(newly_ready):
                queues[g.nodes[nid].device].append(nid)
            for dev in sorted(queues):
                if running[dev] is None and queues[dev]:
                    nid = queues[dev].popleft()
                    start_tick[nid] = t
                    running[dev] = (nid, t + dur_ticks[nid])
                    progress = True
        t += 1

    if remaining > 0:
        raise CycleError(sorted(set(g.nodes) - set(placed)))
    return _finalize(g, durations, placed)


def utilization(s: Schedule) -> dict[str, float]:
    """Busy fraction of the makespan per device; all zero for an empty span."""
    if s.makespan_us <= 0:
        return {dev: 0.0 for dev in s.per_device_busy_us}
    return {dev: busy / s.makespan_us for dev, busy in s.per_device_busy_us.items()}
