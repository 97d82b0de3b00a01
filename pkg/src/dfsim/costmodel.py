"""Per-node duration estimation.

Fits per-signature linear models to profiling grids, predicts durations for
unprofiled argument values, and computes transfer/collective communication
times from link records. Durations are float64 microseconds throughout;
tensor sizes are exact integer bytes. Bytes are converted against MB/s
throughputs as MiB (2^20): that choice is isolated in ``comm_time_us``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import FitError, FitQualityWarning, UnknownCollectiveError, UnknownOpError
from .graph import COLLECTIVE, COMPUTE, DEVICE_LINK, TRANSFER, DataflowGraph, DeviceSpec, OpNode
from .profiledb import (
    SCENARIO_GPU_GPU_UNI,
    SCENARIO_NCCL_ALLREDUCE,
    OpSignature,
    ProfileDB,
    ProfileRecord,
    query_exact,
    query_grid,
    query_link,
)

if TYPE_CHECKING:
    from .strategy import StrategyConfig

MIB = 2**20

ALGO_MEASURED = "MeasuredThroughput"
ALGO_RING = "RingAnalytic"
COLLECTIVE_ALGOS = (ALGO_MEASURED, ALGO_RING)

SOURCE_OVERRIDE = "Override"
SOURCE_EXACT = "ExactRecord"
SOURCE_FITTED = "FittedModel"
SOURCE_COMM = "CommFormula"

# Below this r-squared a fitted model is suspect: linearity is an observed
# property of profiled ops, not a guarantee.
R_SQUARED_WARN = 0.95


@dataclass(frozen=True)
class FitStats:
    r_squared: float
    max_rel_residual: float
    n_points: int


@dataclass(frozen=True)
class LinearCostModel:
    """Least-squares linear predictor for one (op type, hardware tag) pair."""

    op_type: str
    hardware: str
    feature_names: tuple[str, ...]
    coefficients: tuple[float, ...]
    intercept: float
    fit_stats: FitStats

    def __post_init__(self):
        if len(self.coefficients) != len(self.feature_names):
            raise ValueError("one coefficient per feature required")


@dataclass(frozen=True)
class DurationEntry:
    duration_us: float
    source: str

    def __post_init__(self):
        if not self.duration_us >= 0.0:
            raise ValueError(f"durations are nonnegative microseconds, got {self.duration_us}")


@dataclass
class DurationTable:
    """Node id -> estimated duration, total over the graph before simulation."""

    entries: dict[str, DurationEntry] = field(default_factory=dict)

    def durations(self) -> dict[str, float]:
        return {nid: e.duration_us for nid, e in self.entries.items()}


def fit_linear(records: list[ProfileRecord]) -> LinearCostModel:
    """Ordinary least squares of mean duration on the argument features.

    All records must share op type, hardware tag, and feature names, and
    there must be at least one more record than features. A rank-deficient
    design matrix raises :class:`FitError` naming the collinear features.
    """
    if not records:
        raise FitError("no records to fit")
    op_type = records[0].signature.op_type
    hardware = records[0].signature.hardware
    names = tuple(n for n, _ in records[0].signature.arg_features)
    for rec in records:
        if rec.signature.op_type != op_type or rec.signature.hardware != hardware:
            raise FitError("records mix op types or hardware tags")
        if tuple(n for n, _ in rec.signature.arg_features) != names:
            raise FitError("records mix feature names")
    n, k = len(records), len(names)
    if n < k + 1:
        raise FitError(f"underdetermined: {n} records for {k} features (+ intercept)")

    x = np.array([[v for _, v in rec.signature.arg_features] for rec in records], dtype=float)
    y = np.array([rec.mean_duration_us for rec in records], dtype=float)
    design = np.hstack([x, np.ones((n, 1))])
    rank = np.linalg.matrix_rank(design)
    if rank < k + 1:
        raise FitError(
            "degenerate design matrix; collinear features: "
            + ", ".join(_collinear_features(x, names)),
            collinear_features=_collinear_features(x, names),
        )

    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    pred = design @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res < 1e-18 else 0.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    max_rel = float(np.max(np.abs(pred - y) / np.abs(y)))
    return LinearCostModel(
        op_type=op_type,
        hardware=hardware,
        feature_names=names,
        coefficients=tuple(float(c) for c in coef[:k]),
        intercept=float(coef[k]),
        fit_stats=FitStats(r_squared=r_squared, max_rel_residual=max_rel, n_points=n),
    )


def _collinear_features(x: np.ndarray, names: tuple[str, ...]) -> list[str]:
    """Greedy forward scan: features whose column adds no rank are collinear."""
    n = x.shape[0]
    kept = np.ones((n, 1))
    bad = []
    for j, name in enumerate(names):
        candidate = np.hstack([kept, x[:, j : j + 1]])
        if np.linalg.matrix_rank(candidate) == np.linalg.matrix_rank(kept):
            bad.append(name)
        else:
            kept = candidate
    return bad


def predict(model: LinearCostModel, features: list[float]) -> float:
    """Model value at a feature vector, clamped to nonnegative."""
    if len(features) != len(model.feature_names):
        raise ValueError(
            f"expected {len(model.feature_names)} features, got {len(features)}"
        )
    value = model.intercept + sum(c * f for c, f in zip(model.coefficients, features))
    return max(0.0, value)


def comm_time_us(num_bytes: int, throughput_mbps: float, latency_us: float = 0.0) -> float:
    """Time to move num_bytes over a throughput in MB/s, read against MiB.

    The single place where bytes meet the throughput tables' MB/s unit.
    """
    return latency_us + (num_bytes / MIB) / throughput_mbps * 1e6


def transfer_time(num_bytes: int, link: DeviceSpec) -> float:
    """Point-to-point transfer time over a Link device, in microseconds."""
    if link.kind != DEVICE_LINK:
        raise ValueError(f"transfer_time needs a Link device, got {link.kind}")
    if num_bytes <= 0:
        raise ValueError(f"bytes must be > 0, got {num_bytes}")
    return comm_time_us(num_bytes, link.throughput_mbps, link.latency_us)


def allreduce_time(
    num_bytes: int,
    participants: int,
    db: ProfileDB,
    algo: str = ALGO_MEASURED,
    path: str = "PCIeSwitch",
    fallback_link: DeviceSpec | None = None,
) -> float:
    """Allreduce duration across ``participants`` devices, in microseconds.

    MeasuredThroughput divides by the recorded collective throughput for the
    participant count; when that count is uncovered it falls back to the ring
    formula over ``fallback_link`` if one is given. RingAnalytic always uses
    the ring formula: 2(n-1)/n transfers of the payload plus 2(n-1) hops of
    link latency.
    """
    if num_bytes <= 0:
        raise ValueError(f"bytes must be > 0, got {num_bytes}")
    if participants < 2:
        raise ValueError(f"participants must be >= 2, got {participants}")
    if algo not in COLLECTIVE_ALGOS:
        raise ValueError(f"unknown collective algorithm {algo!r}")

    if algo == ALGO_MEASURED:
        rec = query_link(db, SCENARIO_NCCL_ALLREDUCE, path, participants)
        if rec is not None:
            return comm_time_us(num_bytes, rec.throughput_mbps)
        if fallback_link is None:
            raise UnknownCollectiveError(
                f"no {SCENARIO_NCCL_ALLREDUCE} record for path={path!r} "
                f"participants={participants} and no fallback link"
            )
    if fallback_link is None:
        raise UnknownCollectiveError("ring formula requires a fallback link")
    ring_factor = 2.0 * (participants - 1) / participants
    return (
        ring_factor * (num_bytes / MIB) / fallback_link.throughput_mbps * 1e6
        + 2.0 * (participants - 1) * fallback_link.latency_us
    )


def node_features(g: DataflowGraph, node: OpNode) -> list[tuple[str, float]]:
    """Canonical feature vector of a node: numeric attrs plus flattened
    input-shape dims, sorted by name.

    Input dims are named ``in<i>_dim<j>`` for input position i, axis j.
    """
    feats: dict[str, float] = {}
    for name, value in node.attrs.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            continue
        feats[name] = float(value)
    for i, (pid, slot) in enumerate(node.inputs):
        producer = g.nodes.get(pid)
        if producer is None or slot >= len(producer.output_shapes):
            continue
        for j, dim in enumerate(producer.output_shapes[slot].dims):
            key = f"in{i}_dim{j}"
            if key in feats:
                raise ValueError(f"node {node.id!r}: attr name collides with {key!r}")
            feats[key] = float(dim)
    return sorted(feats.items())


def node_signature(g: DataflowGraph, node: OpNode, hardware: str) -> OpSignature:
    return OpSignature(node.op_type, hardware, tuple(node_features(g, node)))


def fit_for_grid(db: ProfileDB, op_type: str, hardware: str) -> LinearCostModel | None:
    """Fit the profiling grid for one (op type, hardware), or None if unfittable.

    Grids mixing feature-name sets are grouped; the largest group wins, ties
    going to the lexicographically smallest name tuple.
    """
    grid = query_grid(db, op_type, hardware)
    if not grid:
        return None
    groups: dict[tuple[str, ...], list[ProfileRecord]] = {}
    for rec in grid:
        names = tuple(n for n, _ in rec.signature.arg_features)
        groups.setdefault(names, []).append(rec)
    best_size = max(len(recs) for recs in groups.values())
    chosen = min(k for k in groups if len(groups[k]) == best_size)
    try:
        model = fit_linear(groups[chosen])
    except FitError:
        return None
    if model.fit_stats.r_squared < R_SQUARED_WARN:
        warnings.warn(
            f"linear model for {op_type}/{hardware} has r_squared="
            f"{model.fit_stats.r_squared:.4f}; estimates may be unreliable",
            FitQualityWarning,
            stacklevel=2,
        )
    return model


def estimate_all(g: DataflowGraph, db: ProfileDB, cfg: "StrategyConfig") -> DurationTable:
    """Resolve a duration for every node or raise :class:`UnknownOpError`.

    Fallback chain per node: manual override, exact profile record, fitted
    linear model over the grid (one fit per op type and hardware tag,
    cached), then for Transfer/Collective kinds the communication formulas.
    ``op_gap_us`` is added to record- and model-sourced Compute durations;
    overrides are taken verbatim. The result is total: every node is filled
    or the whole call fails.
    """
    from .strategy import resolve_overrides

    override_values = resolve_overrides(cfg.overrides, sorted(g.nodes))
    models: dict[tuple[str, str], LinearCostModel | None] = {}
    fallback_link = _ring_fallback_link(db, cfg.collective.path)

    entries: dict[str, DurationEntry] = {}
    unknown: dict[str, str] = {}
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        if nid in override_values:
            entries[nid] = DurationEntry(override_values[nid], SOURCE_OVERRIDE)
            continue
        gap = cfg.op_gap_us if node.kind == COMPUTE else 0.0

        feats = node_features(g, node)
        rec = query_exact(db, OpSignature(node.op_type, cfg.hardware, tuple(feats)))
        if rec is not None:
            entries[nid] = DurationEntry(rec.mean_duration_us + gap, SOURCE_EXACT)
            continue

        key = (node.op_type, cfg.hardware)
        if key not in models:
            models[key] = fit_for_grid(db, *key)
        model = models[key]
        feat_map = dict(feats)
        if model is not None and all(n in feat_map for n in model.feature_names):
            value = predict(model, [feat_map[n] for n in model.feature_names])
            entries[nid] = DurationEntry(value + gap, SOURCE_FITTED)
            continue

        comm = _comm_formula(g, node, db, cfg, fallback_link)
        if comm is not None:
            entries[nid] = DurationEntry(comm, SOURCE_COMM)
            continue
        unknown[nid] = node.op_type

    if unknown:
        raise UnknownOpError(unknown)
    return DurationTable(entries=entries)


def _ring_fallback_link(db: ProfileDB, path: str) -> DeviceSpec | None:
    """Synthesize a ring-formula link from the point-to-point record for a path."""
    rec = query_link(db, SCENARIO_GPU_GPU_UNI, path, 2)
    if rec is None:
        return None
    return DeviceSpec(
        id=f"link:{SCENARIO_GPU_GPU_UNI}:{path}",
        kind=DEVICE_LINK,
        throughput_mbps=rec.throughput_mbps,
        latency_us=rec.latency_us,
    )


def _comm_formula(
    g: DataflowGraph,
    node: OpNode,
    db: ProfileDB,
    cfg: "StrategyConfig",
    fallback_link: DeviceSpec | None,
) -> float | None:
    if node.kind == TRANSFER:
        device = g.devices.get(node.device)
        num_bytes = node.attrs.get("bytes")
        if device is None or device.kind != DEVICE_LINK or not isinstance(num_bytes, int):
            return None
        return transfer_time(num_bytes, device)
    if node.kind == COLLECTIVE:
        group = node.attrs.get("group")
        num_bytes = node.attrs.get("bytes")
        if not isinstance(group, (list, tuple)) or not isinstance(num_bytes, int):
            return None
        try:
            return allreduce_time(
                num_bytes,
                len(group),
                db,
                algo=cfg.collective.algo,
                path=cfg.collective.path,
                fallback_link=fallback_link,
            )
        except (UnknownCollectiveError, ValueError):
            return None
    return None
