"""File-backed store of offline profiling results.

Holds per-op timing records keyed by exact argument signature and per-link
bandwidth/collective-throughput records. Lookups are exact; interpolation
between grid points is the cost model's job, not the database's.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ProfileFormatError

FORMAT_VERSION = 1

# Canonical scenario names used by the communication cost model.
SCENARIO_GPU_GPU_UNI = "gpu-gpu-uni"
SCENARIO_GPU_GPU_BI = "gpu-gpu-bi"
SCENARIO_HOST_TO_GPU = "host-to-gpu"
SCENARIO_GPU_TO_HOST = "gpu-to-host"
SCENARIO_NCCL_ALLREDUCE = "nccl-allreduce"

FeatureVector = tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class OpSignature:
    """Identity of one profiled grid point: op, hardware tag, argument values.

    The hardware tag is an opaque string from the run config
    (e.g. "V100-cuda10.0-cudnn7.5-tf1.13.1"); the database never parses it.
    Feature names are kept sorted and unique.
    """

    op_type: str
    hardware: str
    arg_features: FeatureVector = ()

    def __post_init__(self):
        feats = tuple(sorted((str(n), float(v)) for n, v in self.arg_features))
        names = [n for n, _ in feats]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names in {names}")
        if any(not math.isfinite(v) for _, v in feats):
            raise ValueError(f"non-finite feature value in {feats}")
        object.__setattr__(self, "arg_features", feats)


@dataclass(frozen=True)
class ProfileRecord:
    """One offline timing measurement of an op signature."""

    signature: OpSignature
    mean_duration_us: float
    stderr_us: float = 0.0
    samples: int = 1

    def __post_init__(self):
        if self.mean_duration_us <= 0:
            raise ValueError(f"mean_duration must be > 0, got {self.mean_duration_us}")
        if self.stderr_us < 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr_us}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")


@dataclass(frozen=True)
class LinkRecord:
    """Measured throughput of one communication scenario over one path."""

    scenario: str
    path: str
    participants: int
    throughput_mbps: float
    latency_us: float = 0.0

    def __post_init__(self):
        if self.participants < 1:
            raise ValueError(f"participants must be >= 1, got {self.participants}")
        if not math.isfinite(self.throughput_mbps) or self.throughput_mbps <= 0:
            raise ValueError(f"throughput must be finite and > 0, got {self.throughput_mbps}")
        if self.latency_us < 0:
            raise ValueError(f"latency must be >= 0, got {self.latency_us}")


@dataclass
class ProfileDB:
    """Immutable snapshot of the profiling database.

    ``replaced`` counts inserts that collapsed an identical key (op signature
    or link key) since the snapshot was loaded or created.
    """

    op_records: dict[tuple[str, str], dict[FeatureVector, ProfileRecord]] = field(default_factory=dict)
    link_records: dict[tuple[str, str, int], LinkRecord] = field(default_factory=dict)
    hardware_tags: list[str] = field(default_factory=list)
    provenance: str = ""
    replaced: int = 0

    def iter_op_records(self):
        for grid in self.op_records.values():
            yield from grid.values()


def query_exact(db: ProfileDB, sig: OpSignature) -> ProfileRecord | None:
    """Record whose signature equals ``sig`` exactly, else None."""
    grid = db.op_records.get((sig.op_type, sig.hardware))
    if grid is None:
        return None
    return grid.get(sig.arg_features)


def query_grid(db: ProfileDB, op_type: str, hardware: str) -> list[ProfileRecord]:
    """All records for (op_type, hardware), sorted by argument features."""
    grid = db.op_records.get((op_type, hardware), {})
    return [grid[k] for k in sorted(grid)]


def query_link(db: ProfileDB, scenario: str, path: str, participants: int) -> LinkRecord | None:
    """Exact-key link lookup; unrecorded combinations return None."""
    if participants < 1:
        raise ValueError(f"participants must be >= 1, got {participants}")
    return db.link_records.get((scenario, path, participants))


def insert_record(db: ProfileDB, rec: ProfileRecord | LinkRecord) -> ProfileDB:
    """Return a new snapshot with ``rec`` present (copy-on-write).

    Inserting a record with an existing key replaces it and bumps the
    replacement count.
    """
    new = ProfileDB(
        op_records={k: dict(v) for k, v in db.op_records.items()},
        link_records=dict(db.link_records),
        hardware_tags=list(db.hardware_tags),
        provenance=db.provenance,
        replaced=db.replaced,
    )
    _insert_inplace(new, rec)
    return new


def _insert_inplace(db: ProfileDB, rec: ProfileRecord | LinkRecord):
    if isinstance(rec, ProfileRecord):
        sig = rec.signature
        grid = db.op_records.setdefault((sig.op_type, sig.hardware), {})
        if sig.arg_features in grid:
            db.replaced += 1
        grid[sig.arg_features] = rec
    elif isinstance(rec, LinkRecord):
        key = (rec.scenario, rec.path, rec.participants)
        if key in db.link_records:
            db.replaced += 1
        db.link_records[key] = rec
    else:
        raise TypeError(f"cannot insert {type(rec).__name__}")


# --- document format -------------------------------------------------------


def load_profiles(text: str) -> ProfileDB:
    """Parse a profile-db document; duplicate signatures collapse, last wins."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileFormatError(f"syntax error: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ProfileFormatError("profile-db document must be an object")
    major = str(doc.get("format_version", "")).split(".", 1)[0]
    if major != str(FORMAT_VERSION):
        raise ProfileFormatError(f"unsupported profile-db format version {doc.get('format_version')!r}")

    db = ProfileDB(
        hardware_tags=list(doc.get("hardware_tags", [])),
        provenance=doc.get("provenance", ""),
    )
    for i, rec in enumerate(doc.get("op_records", [])):
        try:
            sig = rec["signature"]
            record = ProfileRecord(
                signature=OpSignature(
                    op_type=sig["op_type"],
                    hardware=sig["hardware"],
                    arg_features=tuple((n, v) for n, v in sig.get("arg_features", [])),
                ),
                mean_duration_us=rec["mean_duration"],
                stderr_us=rec.get("stderr", 0.0),
                samples=rec.get("samples", 1),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProfileFormatError(f"op_records[{i}]: {exc}") from exc
        _insert_inplace(db, record)
    for i, rec in enumerate(doc.get("link_records", [])):
        try:
            record = LinkRecord(
                scenario=rec["scenario"],
                path=rec["path"],
                participants=rec["participants"],
                throughput_mbps=rec["throughput"],
                latency_us=rec.get("latency", 0.0),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProfileFormatError(f"link_records[{i}]: {exc}") from exc
        _insert_inplace(db, record)
    return db


def save_profiles(db: ProfileDB) -> str:
    """Render the database back to its document form, deterministically sorted."""
    op_records = []
    for key in sorted(db.op_records):
        grid = db.op_records[key]
        for feats in sorted(grid):
            rec = grid[feats]
            op_records.append(
                {
                    "signature": {
                        "op_type": rec.signature.op_type,
                        "hardware": rec.signature.hardware,
                        "arg_features": [[n, v] for n, v in rec.signature.arg_features],
                    },
                    "mean_duration": rec.mean_duration_us,
                    "stderr": rec.stderr_us,
                    "samples": rec.samples,
                }
            )
    link_records = [
        {
            "scenario": rec.scenario,
            "path": rec.path,
            "participants": rec.participants,
            "throughput": rec.throughput_mbps,
            "latency": rec.latency_us,
        }
        for key, rec in sorted(db.link_records.items())
    ]
    doc = {
        "format_version": FORMAT_VERSION,
        "hardware_tags": list(db.hardware_tags),
        "provenance": db.provenance,
        "op_records": op_records,
        "link_records": link_records,
    }
    return json.dumps(doc, indent=2) + "\n"
