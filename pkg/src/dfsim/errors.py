"""Exception and warning types shared across dfsim."""

from __future__ import annotations


class DfsimError(Exception):
    """Base class for all dfsim errors."""


class GraphFormatError(DfsimError):
    """Raised when a graph document cannot be parsed into a DataflowGraph.

    ``location`` is a human-readable position hint (JSON path or node id)
    when one is available.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)


class ProfileFormatError(DfsimError):
    """Raised when a profile database document is malformed."""


class ConfigError(DfsimError):
    """Raised when a strategy config document is malformed or inconsistent."""


class CycleError(DfsimError):
    """Raised when an operation requires an acyclic graph but found a cycle."""

    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("graph contains a cycle: " + " -> ".join(self.cycle))


class MissingDurationError(DfsimError):
    """Raised when a duration table does not cover every node in the graph."""

    def __init__(self, node_ids: list[str]):
        self.node_ids = list(node_ids)
        super().__init__(f"no duration for nodes: {', '.join(self.node_ids)}")


class UnknownOpError(DfsimError):
    """Raised when the estimation fallback chain is exhausted for some nodes.

    Mirrors the online-profiling fallback of the overall system: instead of
    running the op on hardware, the caller is pointed at the manual override
    channel. ``nodes`` maps node id to its op type.
    """

    def __init__(self, nodes: dict[str, str]):
        self.nodes = dict(nodes)
        ids = ", ".join(sorted(self.nodes))
        super().__init__(
            f"no profiling data, fitted model, or override for: {ids}. "
            "Add records to the profile database or set a manual override."
        )


class UnknownCollectiveError(DfsimError):
    """Raised when no throughput record or fallback link covers a collective."""


class FitError(DfsimError):
    """Raised when a linear cost model cannot be fitted.

    ``collinear_features`` names the offending features when the design
    matrix is degenerate; empty for an underdetermined system.
    """

    def __init__(self, message: str, collinear_features: list[str] | None = None):
        self.collinear_features = list(collinear_features or [])
        super().__init__(message)


class DfsimWarning(UserWarning):
    """Base class for dfsim warnings."""


class GraphFormatWarning(DfsimWarning):
    """Unknown or ignored fields in a graph document."""


class PatternWarning(DfsimWarning):
    """A config pattern (gradient marker or override) matched nothing."""


class FitQualityWarning(DfsimWarning):
    """A fitted cost model explains the profiling grid poorly."""
