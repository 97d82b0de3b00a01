"""Synthetic graphs, profiling grids, and duration assignments.

The desk-scale stand-in for framework exports and GPU profiling runs: every
generator is a pure function of its spec (seed included), so identical specs
reproduce identical artifacts bit for bit, in any implementation of the
documented RNG.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .costmodel import SOURCE_OVERRIDE, DurationEntry, DurationTable, node_features
from .errors import ConfigError
from .graph import DEVICE_COMPUTE, DataflowGraph, DeviceSpec, OpNode, TensorShape, make_graph
from .profiledb import LinkRecord, OpSignature, ProfileDB, ProfileRecord, _insert_inplace

FORMAT_VERSION = 1

KIND_CHAIN = "Chain"
KIND_DIAMOND = "Diamond"
KIND_LAYERED_CNN = "LayeredCNN"
KIND_RANDOM_DAG = "RandomDAG"
SPEC_KINDS = (KIND_CHAIN, KIND_DIAMOND, KIND_LAYERED_CNN, KIND_RANDOM_DAG)

# 16 grid points per argument, powers of two from 1. The grid spacing is this
# artifact's choice; only the point count is grounded in measurement practice.
DEFAULT_GRID = tuple(float(2**i) for i in range(16))


class SplitMix64:
    """Portable 64-bit PRNG (SplitMix64), reproducible across languages.

    State advances by the golden-gamma constant 0x9E3779B97F4A7C15 modulo
    2^64; output mixing xors by shifts 30/27/31 with multipliers
    0xBF58476D1CE4E5B9 and 0x94D049BB133111EB. Floats take the top 53 bits;
    bounded ints use modulo reduction (bias is negligible at our ranges and
    keeps the algorithm trivially portable).
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def gauss(self) -> float:
        """Standard normal via Box-Muller on two uniform draws."""
        u1 = (self.next_u64() >> 11) * (2.0**-53)
        u2 = (self.next_u64() >> 11) * (2.0**-53)
        # Shift u1 away from zero so the log is finite.
        u1 = (u1 + 2.0**-54) / (1.0 + 2.0**-53)
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class DurationLaw:
    """How synthetic durations relate to an op's features.

    kind "linear": duration = slope * feature + intercept over the named
    feature. kind "constant": duration = intercept (feature optional; without
    one the profile becomes a single zero-feature record). kind "uniform":
    integer durations drawn from [low, high]; only valid for duration
    assignment, not for profile generation.
    """

    kind: str
    feature: str | None = None
    slope: float = 0.0
    intercept: float = 1.0
    low: int = 1
    high: int = 10

    def value_at(self, x: float) -> float:
        if self.kind == "linear":
            return self.slope * x + self.intercept
        if self.kind == "constant":
            return self.intercept
        raise ConfigError(f"law kind {self.kind!r} has no closed form")


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    nodes: int = 8
    layers: int = 4
    density: float = 0.1
    seed: int = 0
    num_devices: int = 1
    hardware: str = "synth-hw"
    laws: dict[str, DurationLaw] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SPEC_KINDS:
            raise ConfigError(f"unknown synth kind {self.kind!r}")
        if self.nodes < 1 or self.layers < 1 or self.num_devices < 1:
            raise ConfigError("nodes, layers, and num_devices must be >= 1")
        if not (0.0 <= self.density <= 1.0):
            raise ConfigError(f"density must be in [0, 1], got {self.density}")


# Synthetic per-op laws for the CNN-like model. The shapes of these numbers
# (conv dominating, elementwise cheap) are plausible; the values are not
# measurements.
CNN_LAWS: dict[str, DurationLaw] = {
    "Input": DurationLaw("constant", intercept=5.0),
    "Conv2D": DurationLaw("linear", feature="in_channels", slope=12.5, intercept=40.0),
    "Relu": DurationLaw("linear", feature="in0_dim3", slope=0.05, intercept=8.0),
    "MatMul": DurationLaw("linear", feature="k", slope=0.02, intercept=30.0),
    "SoftmaxLoss": DurationLaw("linear", feature="in0_dim1", slope=0.0, intercept=15.0),
    "MatMulGrad": DurationLaw("linear", feature="k", slope=0.03, intercept=35.0),
    "Conv2DBackpropFilter": DurationLaw("linear", feature="in_channels", slope=14.0, intercept=50.0),
    "Conv2DBackpropInput": DurationLaw("linear", feature="in_channels", slope=13.0, intercept=45.0),
    "ApplyGradientDescent": DurationLaw("linear", feature="in0_dim2", slope=0.5, intercept=10.0),
}

CHAIN_OPS = ("MatMul", "Relu", "Add")
CHAIN_LAWS: dict[str, DurationLaw] = {
    op: DurationLaw("linear", feature="cost_hint", slope=10.0, intercept=5.0) for op in CHAIN_OPS
}

RANDOM_OPS = ("MatMul", "Relu", "Add", "Mul")

# Round-number synthetic link throughputs (MB/s) so generated profile DBs can
# time transfers and collectives without real measurements.
SYNTH_LINKS = (
    LinkRecord("gpu-gpu-uni", "PCIeSwitch", 2, 12000.0),
    LinkRecord("host-to-gpu", "PCIeSwitch", 1, 11000.0),
    LinkRecord("gpu-to-host", "PCIeSwitch", 1, 13000.0),
    LinkRecord("nccl-allreduce", "PCIeSwitch", 2, 10000.0),
    LinkRecord("nccl-allreduce", "PCIeSwitch", 4, 8000.0),
    LinkRecord("nccl-allreduce", "PCIeSwitch", 8, 6000.0),
)


def default_laws(spec: SynthSpec) -> dict[str, DurationLaw]:
    if spec.laws:
        return dict(spec.laws)
    if spec.kind == KIND_LAYERED_CNN:
        return dict(CNN_LAWS)
    if spec.kind == KIND_RANDOM_DAG:
        return {op: DurationLaw("linear", feature="cost_hint", slope=10.0, intercept=5.0) for op in RANDOM_OPS}
    return dict(CHAIN_LAWS)


# --- graph generators --------------------------------------------------------


def gen_graph(spec: SynthSpec) -> DataflowGraph:
    """Generate a validated acyclic graph for the spec; pure in the spec."""
    if spec.kind == KIND_CHAIN:
        return _gen_chain(spec)
    if spec.kind == KIND_DIAMOND:
        return _gen_diamond(spec)
    if spec.kind == KIND_LAYERED_CNN:
        return _gen_layered_cnn(spec)
    return _gen_random_dag(spec)


def _devices(spec: SynthSpec) -> list[DeviceSpec]:
    return [
        DeviceSpec(id=f"gpu{i}", kind=DEVICE_COMPUTE, hardware=spec.hardware)
        for i in range(spec.num_devices)
    ]


def _gen_chain(spec: SynthSpec) -> DataflowGraph:
    shape = TensorShape((32, 64), 4)
    nodes = []
    for i in range(spec.nodes):
        nodes.append(
            OpNode(
                id=f"node_{i:03d}",
                op_type=CHAIN_OPS[i % len(CHAIN_OPS)],
                device="gpu0",
                attrs={"cost_hint": (i % 16) + 1},
                inputs=((f"node_{i - 1:03d}", 0),) if i > 0 else (),
                output_shapes=(shape,),
            )
        )
    return make_graph(nodes, _devices(spec), {"model": f"chain-{spec.nodes}", "batch": 32})


def _gen_diamond(spec: SynthSpec) -> DataflowGraph:
    shape = TensorShape((16, 16), 4)

    def node(nid, hint, inputs):
        return OpNode(
            id=nid,
            op_type="Add",
            device="gpu0",
            attrs={"cost_hint": hint},
            inputs=tuple((p, 0) for p in inputs),
            output_shapes=(shape,),
        )

    nodes = [
        node("head", 1, []),
        node("left", 2, ["head"]),
        node("right", 4, ["head"]),
        node("tail", 1, ["left", "right"]),
    ]
    return make_graph(nodes, _devices(spec), {"model": "diamond"})


def _gen_layered_cnn(spec: SynthSpec) -> DataflowGraph:
    """Forward conv/relu chain, backward filter/input gradients, and one
    weight-update node per layer; gradient producers are named grad_conv_*
    so config markers can select them."""
    batch, hw, kernel = 32, 16, 3
    layers = spec.layers
    channels = [8 * (1 + (i % 8)) for i in range(layers)]
    in_channels = [3] + channels[:-1]

    nodes: list[OpNode] = []

    def act_shape(ch: int) -> TensorShape:
        return TensorShape((batch, hw, hw, ch), 4)

    nodes.append(
        OpNode(id="input", op_type="Input", device="gpu0", output_shapes=(act_shape(3),))
    )
    prev = "input"
    for i in range(layers):
        conv = f"conv_{i:02d}"
        relu = f"relu_{i:02d}"
        nodes.append(
            OpNode(
                id=conv,
                op_type="Conv2D",
                device="gpu0",
                attrs={
                    "batch": batch,
                    "in_channels": in_channels[i],
                    "out_channels": channels[i],
                    "kernel": kernel,
                    "stride": 1,
                },
                inputs=((prev, 0),),
                output_shapes=(act_shape(channels[i]),),
            )
        )
        nodes.append(
            OpNode(
                id=relu,
                op_type="Relu",
                device="gpu0",
                inputs=((conv, 0),),
                output_shapes=(act_shape(channels[i]),),
            )
        )
        prev = relu

    k_dim = hw * hw * channels[-1]
    nodes.append(
        OpNode(
            id="fc",
            op_type="MatMul",
            device="gpu0",
            attrs={"m": batch, "k": k_dim, "n": 10},
            inputs=((prev, 0),),
            output_shapes=(TensorShape((batch, 10), 4),),
        )
    )
    nodes.append(
        OpNode(
            id="loss",
            op_type="SoftmaxLoss",
            device="gpu0",
            inputs=(("fc", 0),),
            output_shapes=(TensorShape((1,), 4),),
        )
    )
    nodes.append(
        OpNode(
            id="dfc",
            op_type="MatMulGrad",
            device="gpu0",
            attrs={"m": batch, "k": k_dim, "n": 10},
            inputs=(("loss", 0),),
            output_shapes=(act_shape(channels[-1]),),
        )
    )

    upstream = "dfc"
    for i in reversed(range(layers)):
        grad = f"grad_conv_{i:02d}"
        bwd = f"bwd_{i:02d}"
        apply_nid = f"apply_conv_{i:02d}"
        weight_shape = TensorShape((kernel, kernel, in_channels[i], channels[i]), 4)
        grad_attrs = {"in_channels": in_channels[i], "out_channels": channels[i], "kernel": kernel}
        nodes.append(
            OpNode(
                id=grad,
                op_type="Conv2DBackpropFilter",
                device="gpu0",
                attrs=dict(grad_attrs),
                inputs=((upstream, 0),),
                output_shapes=(weight_shape,),
            )
        )
        nodes.append(
            OpNode(
                id=bwd,
                op_type="Conv2DBackpropInput",
                device="gpu0",
                attrs=dict(grad_attrs),
                inputs=((upstream, 0),),
                output_shapes=(act_shape(in_channels[i]),),
            )
        )
        nodes.append(
            OpNode(
                id=apply_nid,
                op_type="ApplyGradientDescent",
                device="gpu0",
                inputs=((grad, 0),),
                output_shapes=(weight_shape,),
            )
        )
        upstream = bwd

    meta = {"model": f"layered-cnn-{layers}", "batch": batch}
    return make_graph(nodes, _devices(spec), meta)


def _gen_random_dag(spec: SynthSpec) -> DataflowGraph:
    rng = SplitMix64(spec.seed)
    shape = TensorShape((16, 16), 4)
    width = max(4, len(str(spec.nodes - 1)))
    ids = [f"node_{i:0{width}d}" for i in range(spec.nodes)]
    nodes = []
    for j in range(spec.nodes):
        inputs = []
        for i in range(j):
            if rng.uniform() < spec.density:
                inputs.append((ids[i], 0))
        device = f"gpu{rng.randint(0, spec.num_devices - 1)}"
        nodes.append(
            OpNode(
                id=ids[j],
                op_type=RANDOM_OPS[j % len(RANDOM_OPS)],
                device=device,
                attrs={"cost_hint": rng.randint(1, 16)},
                inputs=tuple(inputs),
                output_shapes=(shape,),
            )
        )
    return make_graph(nodes, _devices(spec), {"model": f"random-dag-{spec.nodes}", "seed": spec.seed})


# --- profile and duration generators ----------------------------------------


def gen_profiles(spec: SynthSpec, grid: list[float] | None = None) -> ProfileDB:
    """Profile grid with durations planted by the spec's laws.

    Linear and constant laws with a named feature produce one record per
    grid point; a constant law without a feature produces a single
    zero-feature record (the exact-match path for featureless ops). The DB
    also carries the fixed SYNTH_LINKS records so transfers and collectives
    in generated graphs can be timed.
    """
    grid = list(DEFAULT_GRID if grid is None else grid)
    laws = default_laws(spec)
    db = ProfileDB(hardware_tags=[spec.hardware], provenance=f"synthetic laws for {spec.kind}")
    for link in SYNTH_LINKS:
        _insert_inplace(db, link)
    for op_type in sorted(laws):
        law = laws[op_type]
        if law.kind == "uniform":
            raise ConfigError(f"uniform law for {op_type!r} cannot generate a profile grid")
        if law.feature is None:
            points: list[tuple[tuple[tuple[str, float], ...], float]] = [((), law.intercept)]
        else:
            points = [(((law.feature, x),), law.value_at(x)) for x in grid]
        for feats, mean in points:
            if mean <= 0:
                raise ConfigError(f"law for {op_type!r} yields nonpositive duration {mean} on the grid")
            _insert_inplace(
                db,
                ProfileRecord(
                    signature=OpSignature(op_type=op_type, hardware=spec.hardware, arg_features=feats),
                    mean_duration_us=mean,
                    stderr_us=0.0,
                    samples=1000,
                ),
            )
    return db


def gen_durations(g: DataflowGraph, law: DurationLaw, seed: int = 0) -> DurationTable:
    """Assign a duration to every node directly (bypassing the estimator).

    Uniform laws draw integer microseconds from [low, high]; linear and
    constant laws evaluate on the node's features (missing feature: the
    intercept). Entries are tagged as overrides since that is what they are
    semantically: externally supplied durations.
    """
    rng = SplitMix64(seed)
    entries = {}
    for nid in sorted(g.nodes):
        if law.kind == "uniform":
            value = float(rng.randint(law.low, law.high))
        else:
            feats = dict(node_features(g, g.nodes[nid]))
            x = feats.get(law.feature or "", 0.0)
            value = law.value_at(x) if law.feature in feats else law.intercept
        entries[nid] = DurationEntry(value, SOURCE_OVERRIDE)
    return DurationTable(entries=entries)


# --- spec document -----------------------------------------------------------


def parse_synth_spec(text: str) -> SynthSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("synth spec document must be an object")
    major = str(doc.get("format_version", FORMAT_VERSION)).split(".", 1)[0]
    if major != str(FORMAT_VERSION):
        raise ConfigError(f"unsupported synth spec version {doc.get('format_version')!r}")
    laws = {}
    for op_type, law in doc.get("laws", {}).items():
        laws[op_type] = DurationLaw(
            kind=law.get("kind", "linear"),
            feature=law.get("feature"),
            slope=law.get("slope", 0.0),
            intercept=law.get("intercept", 1.0),
            low=law.get("low", 1),
            high=law.get("high", 10),
        )
    try:
        return SynthSpec(
            kind=doc.get("kind", KIND_CHAIN),
            nodes=doc.get("nodes", 8),
            layers=doc.get("layers", 4),
            density=doc.get("density", 0.1),
            seed=doc.get("seed", 0),
            num_devices=doc.get("num_devices", 1),
            hardware=doc.get("hardware", "synth-hw"),
            laws=laws,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth spec: {exc}") from exc


def serialize_synth_spec(spec: SynthSpec) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": spec.kind,
        "nodes": spec.nodes,
        "layers": spec.layers,
        "density": spec.density,
        "seed": spec.seed,
        "num_devices": spec.num_devices,
        "hardware": spec.hardware,
        "laws": {
            op: {
                "kind": law.kind,
                "feature": law.feature,
                "slope": law.slope,
                "intercept": law.intercept,
                "low": law.low,
                "high": law.high,
            }
            for op, law in sorted(spec.laws.items())
        },
    }
    return json.dumps(doc, indent=2) + "\n"
