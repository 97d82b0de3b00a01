"""dfsim: estimate ML training iteration time from a dataflow graph and an
offline profiling database, without running the model."""

__version__ = "0.1.0"

from .costmodel import (
    DurationEntry,
    DurationTable,
    LinearCostModel,
    allreduce_time,
    estimate_all,
    fit_linear,
    predict,
    transfer_time,
)
from .engine import Schedule, ScheduledNode, naive_simulate, simulate, utilization
from .graph import (
    DataflowGraph,
    DeviceSpec,
    OpNode,
    TensorShape,
    critical_path,
    make_graph,
    parse_graph,
    serialize_graph,
    topological_order,
    validate,
)
from .profiledb import (
    LinkRecord,
    OpSignature,
    ProfileDB,
    ProfileRecord,
    insert_record,
    load_profiles,
    query_exact,
    query_grid,
    query_link,
    save_profiles,
)
from .reporting import ComparisonRow, SummaryReport, compare, summarize, to_trace
from .strategy import ExpandedGraph, StrategyConfig, apply_overrides, expand_data_parallel, parse_config
from .synth import SplitMix64, SynthSpec, gen_durations, gen_graph, gen_profiles

__all__ = [
    "__version__",
    "TensorShape", "OpNode", "DeviceSpec", "DataflowGraph",
    "parse_graph", "serialize_graph", "make_graph", "validate",
    "topological_order", "critical_path",
    "OpSignature", "ProfileRecord", "LinkRecord", "ProfileDB",
    "load_profiles", "save_profiles", "query_exact", "query_grid", "query_link", "insert_record",
    "LinearCostModel", "DurationTable", "DurationEntry",
    "fit_linear", "predict", "transfer_time", "allreduce_time", "estimate_all",
    "StrategyConfig", "ExpandedGraph", "parse_config", "expand_data_parallel", "apply_overrides",
    "Schedule", "ScheduledNode", "simulate", "naive_simulate", "utilization",
    "SummaryReport", "ComparisonRow", "to_trace", "summarize", "compare",
    "SynthSpec", "SplitMix64", "gen_graph", "gen_profiles", "gen_durations",
]
