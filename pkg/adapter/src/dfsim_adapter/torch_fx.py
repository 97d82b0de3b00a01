"""PyTorch extraction via torch.fx symbolic tracing.

Reads the post-trace forward graph (pre-autograd, pre-placement). Shapes are
propagated on the meta device, so no real tensor computation runs; ops whose
output shape is data-dependent (e.g. nonzero) fail meta propagation and are
dropped with a reason, along with everything downstream of them.
"""

from __future__ import annotations

from .document import ExtractedNode, ExtractionReport, build_document, drop_dependents, normalize_device

_SCALAR_BYTES = 8  # python-number results modeled as one 8-byte scalar


class _FailedShape:
    """Sentinel standing in for a value whose shape could not be resolved;
    any op consuming it raises, which cascades the failure."""

    def __repr__(self):
        return "<unresolved>"


def _shape_of(value, torch):
    """(dims, dtype_bytes) list for one propagated value, or None if unknown."""
    if isinstance(value, _FailedShape):
        return None
    if isinstance(value, torch.Tensor):
        if any(not isinstance(d, int) for d in value.shape):
            return None
        return [(tuple(value.shape), value.element_size())]
    if isinstance(value, (tuple, list)):
        shapes = []
        for item in value:
            got = _shape_of(item, torch)
            if got is None:
                return None
            shapes.extend(got)
        return shapes
    if isinstance(value, (int, float, bool)):
        return [((), _SCALAR_BYTES)]
    return None


def _module_attrs(module, torch) -> dict:
    nn = torch.nn
    if isinstance(module, nn.Conv2d):
        return {
            "in_channels": module.in_channels,
            "out_channels": module.out_channels,
            "kernel": module.kernel_size[0],
            "stride": module.stride[0],
        }
    if isinstance(module, nn.Linear):
        return {"in_features": module.in_features, "out_features": module.out_features}
    if isinstance(module, (nn.MaxPool2d, nn.AvgPool2d)):
        kernel = module.kernel_size
        return {"kernel": kernel if isinstance(kernel, int) else kernel[0]}
    return {}


def _scalar_args(node) -> dict:
    attrs = {}
    for i, arg in enumerate(node.args):
        if isinstance(arg, bool):
            continue
        if isinstance(arg, (int, float)):
            attrs[f"arg{i}"] = arg
    for key, value in node.kwargs.items():
        if isinstance(value, bool):
            continue
        if isinstance(value, (int, float, str)):
            attrs[key] = value
    return attrs


def _op_name(node, gm) -> str:
    if node.op == "call_module":
        return type(gm.get_submodule(node.target)).__name__
    if node.op == "call_function":
        return getattr(node.target, "__name__", str(node.target))
    if node.op == "call_method":
        return str(node.target)
    if node.op == "placeholder":
        return "Placeholder"
    if node.op == "get_attr":
        return "GetAttr"
    return node.op


def extract_torch(model, example_input_shapes, device: str | None = None):
    """Extract a torch.nn.Module traced with torch.fx.

    ``example_input_shapes`` gives one shape tuple per forward argument;
    inputs are fabricated on the meta device. Returns (document dict,
    ExtractionReport).
    """
    import copy

    import torch
    from torch.fx import symbolic_trace
    from torch.fx.interpreter import Interpreter

    if device is None:
        param = next(model.parameters(), None)
        device = normalize_device(str(param.device) if param is not None else "cpu")

    gm = symbolic_trace(copy.deepcopy(model))
    gm.to("meta")

    failures: dict[str, str] = {}
    values: dict[str, object] = {}

    class TolerantInterpreter(Interpreter):
        def run_node(self, node):
            try:
                result = super().run_node(node)
            except Exception as exc:
                failures[node.name] = f"unresolved shape ({type(exc).__name__})"
                result = _FailedShape()
            values[node.name] = result
            return result

    inputs = tuple(torch.empty(tuple(shape), device="meta") for shape in example_input_shapes)
    TolerantInterpreter(gm).run(*inputs)

    fx_nodes = list(gm.graph.nodes)
    nodes: list[ExtractedNode] = []
    dropped: dict[str, str] = {}
    for node in fx_nodes:
        if node.op == "output":
            dropped[node.name] = "structural output marker"
            continue
        if node.name in failures:
            dropped[node.name] = failures[node.name]
            continue
        shapes = _shape_of(values.get(node.name, _FailedShape()), torch)
        if shapes is None:
            dropped[node.name] = "unresolved shape"
            continue
        attrs = _scalar_args(node)
        if node.op == "call_module":
            attrs.update(_module_attrs(gm.get_submodule(node.target), torch))
        nodes.append(
            ExtractedNode(
                id=node.name,
                op_type=_op_name(node, gm),
                device=device,
                attrs=attrs,
                inputs=[(src.name, 0) for src in node.all_input_nodes],
                output_shapes=shapes,
            )
        )

    emitted, dropped = drop_dependents(nodes, dropped)
    report = ExtractionReport(
        framework="torch",
        framework_version=torch.__version__,
        source_nodes=len(fx_nodes),
        emitted_by_kind={"Compute": len(emitted)} if emitted else {},
        dropped=sorted(dropped.items()),
    )
    hardware = f"{device.rstrip('0123456789')}-torch{torch.__version__}"
    doc = build_document(
        emitted,
        hardware=hardware,
        metadata={"model": type(model).__name__, "framework": "torch", "stage": "fx-forward"},
    )
    return doc, report
