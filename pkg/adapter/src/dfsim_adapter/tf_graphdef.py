"""TensorFlow extraction from a live tf.Graph or a serialized GraphDef.

Reads the graph as built/exported (v1-style GraphDef, pre-partitioning),
relying on TensorFlow's static shape inference only; nothing is executed.
Ops with any not-fully-defined output shape are dropped with a reason, along
with their dependents.
"""

from __future__ import annotations

from pathlib import Path

from .document import ExtractedNode, ExtractionReport, build_document, drop_dependents, normalize_device


def _attrs_of(op) -> dict:
    """Scalar numeric/string attrs, with short int lists flattened."""
    attrs = {}
    for name, value in sorted(op.node_def.attr.items()):
        if name.startswith("_"):
            continue
        kind = value.WhichOneof("value")
        if kind == "i":
            attrs[name] = int(value.i)
        elif kind == "f":
            attrs[name] = float(value.f)
        elif kind == "s":
            try:
                text = value.s.decode("utf-8")
            except UnicodeDecodeError:
                continue
            if text and len(text) <= 64:
                attrs[name] = text
        elif kind == "list" and value.list.i and len(value.list.i) <= 8:
            for i, item in enumerate(value.list.i):
                attrs[f"{name}_{i}"] = int(item)
    return attrs


def _load_graph(source, tf):
    """Accept a tf.Graph, GraphDef, or path to .pb/.pbtxt."""
    if isinstance(source, tf.Graph):
        return source
    graph_def = None
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"no such model file: {path}")
        graph_def = tf.compat.v1.GraphDef()
        if path.suffix == ".pbtxt":
            from google.protobuf import text_format

            text_format.Parse(path.read_text(), graph_def)
        else:
            graph_def.ParseFromString(path.read_bytes())
    elif source.__class__.__name__ == "GraphDef":
        graph_def = source
    else:
        raise TypeError(f"unsupported TensorFlow source {type(source).__name__}")
    graph = tf.Graph()
    with graph.as_default():
        tf.import_graph_def(graph_def, name="")
    return graph


def extract_tf(source):
    """Extract a TensorFlow graph. Returns (document dict, ExtractionReport)."""
    import tensorflow as tf

    graph = _load_graph(source, tf)
    ops = graph.get_operations()

    nodes: list[ExtractedNode] = []
    dropped: dict[str, str] = {}
    for op in ops:
        shapes = []
        unresolved = False
        for tensor in op.outputs:
            if not tensor.shape.is_fully_defined():
                unresolved = True
                break
            size = getattr(tensor.dtype, "size", None) or 4
            shapes.append((tuple(int(d) for d in tensor.shape), int(size)))
        if unresolved:
            dropped[op.name] = "unresolved shape"
            continue
        nodes.append(
            ExtractedNode(
                id=op.name,
                op_type=op.type,
                device=normalize_device(op.device),
                attrs=_attrs_of(op),
                inputs=[(t.op.name, t.value_index) for t in op.inputs],
                output_shapes=shapes,
            )
        )

    emitted, dropped = drop_dependents(nodes, dropped)
    report = ExtractionReport(
        framework="tensorflow",
        framework_version=tf.__version__,
        source_nodes=len(ops),
        emitted_by_kind={"Compute": len(emitted)} if emitted else {},
        dropped=sorted(dropped.items()),
    )
    doc = build_document(
        emitted,
        hardware=f"cpu-tf{tf.__version__}",
        metadata={"framework": "tensorflow", "stage": "graphdef"},
    )
    return doc, report
