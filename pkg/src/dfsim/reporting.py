"""Rendering of schedules: Chrome trace documents, bottleneck summaries,
and comparison tables against measured iteration times."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

from .engine import Schedule, utilization
from .errors import DfsimError, DfsimWarning
from .graph import DEVICE_COMPUTE, DataflowGraph, critical_path


@dataclass
class SummaryReport:
    makespan_us: float
    per_device_busy_us: dict[str, float]
    utilization: dict[str, float]
    device_kinds: dict[str, str]
    top_k_ops: list[tuple[str, float, float]]  # (op type, total us, share of all op time)
    compute_us: float
    comm_us: float
    overlap_us: float
    critical_path_nodes: list[str] = field(default_factory=list)
    critical_path_us: float = 0.0


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    measured_us: float
    simulated_us: float
    rel_error: float  # |measured - simulated| / measured


# --- chrome trace ------------------------------------------------------------


def to_trace(s: Schedule) -> str:
    """Chrome trace event document (JSON-array variant).

    One complete ("X") event per scheduled node with integer microsecond
    timestamps (rounded half-to-even), device as track, op type as event
    name, plus one metadata event naming each device track.
    """
    devices = sorted(s.per_device_busy_us)
    tid = {dev: i for i, dev in enumerate(devices)}
    events: list[dict] = [
        {
            "name": "thread_name",
            "ph": "M",
            "pid": 0,
            "tid": tid[dev],
            "args": {"name": dev},
        }
        for dev in devices
    ]
    for e in s.entries:
        events.append(
            {
                "name": e.op_type or e.node_id,
                "ph": "X",
                "ts": round(e.start_us),
                "dur": round(e.finish_us - e.start_us),
                "pid": 0,
                "tid": tid.get(e.device, len(devices)),
                "args": {"node": e.node_id, "source": e.source},
            }
        )
    return json.dumps(events, indent=1) + "\n"


def trace_intervals(trace_text: str) -> list[tuple[str, int, int, str]]:
    """Recover (device, start, finish, op name) tuples from a trace document."""
    events = json.loads(trace_text)
    names = {ev["tid"]: ev["args"]["name"] for ev in events if ev["ph"] == "M"}
    out = []
    for ev in events:
        if ev["ph"] != "X":
            continue
        out.append((names.get(ev["tid"], str(ev["tid"])), ev["ts"], ev["ts"] + ev["dur"], ev["name"]))
    return out


# --- summary -----------------------------------------------------------------


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _intersection_us(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> float:
    total = 0.0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return total


def summarize(s: Schedule, g: DataflowGraph, top_k: int = 10) -> SummaryReport:
    """Aggregate a schedule into bottleneck-hunting numbers.

    Overlap is the measure of time during which at least one compute device
    and at least one communication device (Link or CollectiveResource) are
    simultaneously busy, from an interval sweep.
    """
    schedule_ids = {e.node_id for e in s.entries}
    if schedule_ids != set(g.nodes):
        raise DfsimError("schedule does not correspond to the graph (node sets differ)")

    durations = {e.node_id: e.finish_us - e.start_us for e in s.entries}
    totals: dict[str, float] = {}
    for e in s.entries:
        key = e.op_type or e.node_id
        totals[key] = totals.get(key, 0.0) + (e.finish_us - e.start_us)
    grand_total = sum(totals.values())
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[: max(0, top_k)]
    top_ops = [
        (name, total, total / grand_total if grand_total > 0 else 0.0)
        for name, total in ranked
    ]

    kinds = {dev: spec.kind for dev, spec in g.devices.items()}
    compute_intervals = []
    comm_intervals = []
    compute_us = comm_us = 0.0
    for e in s.entries:
        span = (e.start_us, e.finish_us)
        if kinds.get(e.device, DEVICE_COMPUTE) == DEVICE_COMPUTE:
            compute_us += e.finish_us - e.start_us
            compute_intervals.append(span)
        else:
            comm_us += e.finish_us - e.start_us
            comm_intervals.append(span)
    overlap = _intersection_us(_merge_intervals(compute_intervals), _merge_intervals(comm_intervals))

    cp_len, cp_nodes = critical_path(g, durations)
    return SummaryReport(
        makespan_us=s.makespan_us,
        per_device_busy_us=dict(s.per_device_busy_us),
        utilization=utilization(s),
        device_kinds=kinds,
        top_k_ops=top_ops,
        compute_us=compute_us,
        comm_us=comm_us,
        overlap_us=overlap,
        critical_path_nodes=cp_nodes,
        critical_path_us=cp_len,
    )


def render_summary_text(report: SummaryReport) -> str:
    lines = [
        f"makespan: {report.makespan_us / 1000.0:.2f} ms ({report.makespan_us:.3f} us)",
        f"compute busy: {report.compute_us:.3f} us",
        f"communication busy: {report.comm_us:.3f} us",
        f"compute/comm overlap: {report.overlap_us:.3f} us",
        "",
        "device utilization:",
    ]
    for dev in sorted(report.per_device_busy_us):
        busy = report.per_device_busy_us[dev]
        util = report.utilization.get(dev, 0.0)
        kind = report.device_kinds.get(dev, "?")
        lines.append(f"  {dev} [{kind}]: busy {busy:.3f} us, utilization {util:6.2%}")
    lines.append("")
    lines.append("top ops by total time:")
    for name, total, share in report.top_k_ops:
        lines.append(f"  {name}: {total:.3f} us ({share:.2%})")
    lines.append("")
    lines.append(
        f"critical path: {report.critical_path_us:.3f} us over "
        f"{len(report.critical_path_nodes)} nodes"
    )
    if report.critical_path_nodes:
        lines.append("  " + " -> ".join(report.critical_path_nodes))
    return "\n".join(lines) + "\n"


def render_summary_csv(report: SummaryReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["device", "kind", "busy_us", "utilization"])
    for dev in sorted(report.per_device_busy_us):
        writer.writerow(
            [
                dev,
                report.device_kinds.get(dev, ""),
                repr(report.per_device_busy_us[dev]),
                repr(report.utilization.get(dev, 0.0)),
            ]
        )
    return buf.getvalue()


# --- measured-vs-simulated comparison ---------------------------------------


def compare(
    rows_in: list[tuple[str, float]], simulated: dict[str, float]
) -> list[ComparisonRow]:
    """Relative error per model; rows without a simulated value warn and drop."""
    rows = []
    for name, measured in rows_in:
        if name not in simulated:
            warnings.warn(f"no simulated value for {name!r}", DfsimWarning, stacklevel=2)
            continue
        sim = simulated[name]
        if measured > 0:
            err = abs(measured - sim) / measured
        else:
            err = 0.0 if sim == measured else math.inf
        rows.append(ComparisonRow(name=name, measured_us=measured, simulated_us=sim, rel_error=err))
    return rows


def render_comparison(rows: list[ComparisonRow]) -> str:
    header = f"{'model':<20} {'measured_us':>14} {'simulated_us':>14} {'error':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.name:<20} {row.measured_us:>14.2f} {row.simulated_us:>14.2f} "
            f"{row.rel_error:>7.2%}"
        )
    return "\n".join(lines) + "\n"
