"""dfsim-extract: export a framework model into the unified graph format.

`--format torch` takes `--input <python file or module>:<factory>` where the
factory returns (torch.nn.Module, example input shapes). `--format
tf-graphdef` takes a serialized GraphDef path (.pb binary or .pbtxt text).

Exit codes: 0 success, 1 zero extractable nodes, 2 unreadable input or
unsupported format.
"""

from __future__ import annotations

import argparse
import importlib
import importlib.util
import sys
from pathlib import Path

from .document import document_to_text

STAGES = ("auto", "fx-forward", "graphdef")


def _load_factory(spec: str):
    module_part, sep, func_name = spec.rpartition(":")
    if not sep:
        raise ValueError(f"--input for torch must be '<module-or-file>:<factory>', got {spec!r}")
    if module_part.endswith(".py"):
        path = Path(module_part)
        if not path.exists():
            raise FileNotFoundError(f"no such file: {path}")
        loader_spec = importlib.util.spec_from_file_location(path.stem, path)
        module = importlib.util.module_from_spec(loader_spec)
        loader_spec.loader.exec_module(module)
    else:
        module = importlib.import_module(module_part)
    factory = getattr(module, func_name, None)
    if factory is None:
        raise ValueError(f"{module_part} has no factory {func_name!r}")
    return factory


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfsim-extract", description=__doc__)
    parser.add_argument("--input", required=True, help="model source (see --format)")
    parser.add_argument("--format", required=True, choices=("torch", "tf-graphdef"))
    parser.add_argument("--out", required=True, help="output graph document path")
    parser.add_argument("--report", default=None, help="also write the extraction report JSON here")
    parser.add_argument(
        "--stage",
        default="auto",
        choices=STAGES,
        help="graph stage to read; auto = fx-forward for torch, graphdef for tf",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.stage != "auto":
        expected = "fx-forward" if args.format == "torch" else "graphdef"
        if args.stage != expected:
            print(f"error: format {args.format} reads stage {expected!r} only", file=sys.stderr)
            return 2

    try:
        if args.format == "torch":
            from .torch_fx import extract_torch

            factory = _load_factory(args.input)
            model, example_shapes = factory()
            doc, report = extract_torch(model, example_shapes)
        else:
            from .tf_graphdef import extract_tf

            doc, report = extract_tf(args.input)
    except (FileNotFoundError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if not doc["nodes"]:
        print("error: zero extractable nodes (every op dropped)", file=sys.stderr)
        for name, reason in report.dropped:
            print(f"  dropped {name}: {reason}", file=sys.stderr)
        return 1

    Path(args.out).write_text(document_to_text(doc))
    if args.report:
        Path(args.report).write_text(report.to_json())
    print(
        f"{report.framework} {report.framework_version}: "
        f"{report.emitted_total()} nodes emitted, {len(report.dropped)} dropped "
        f"of {report.source_nodes} source nodes -> {args.out}"
    )
    for name, reason in report.dropped:
        print(f"  dropped {name}: {reason}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
