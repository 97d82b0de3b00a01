"""Command-line entry point: validate, simulate, fit, gen, compare.

Exit codes are a stable contract: 0 success, 1 validation findings, 2 I/O or
input-format problems, 3 unknown op, 4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .costmodel import estimate_all, fit_for_grid
from .engine import simulate
from .errors import DfsimError, UnknownOpError
from .graph import parse_graph, serialize_graph, validate
from .profiledb import load_profiles, save_profiles
from .reporting import compare, render_comparison, render_summary_csv, render_summary_text, summarize, to_trace
from .strategy import StrategyConfig, expand_data_parallel, parse_config
from .synth import gen_graph, gen_profiles, parse_synth_spec

log = logging.getLogger("dfsim")

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_IO = 2
EXIT_UNKNOWN_OP = 3
EXIT_FIT = 4


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc.strerror or exc}") from exc


class _IOFailure(Exception):
    pass


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# --- subcommands -------------------------------------------------------------


def cmd_validate(args) -> int:
    g = parse_graph(_read_text(args.graph))
    report = validate(g)
    for finding in report.findings:
        print(f"{finding.code}: {finding.message}", file=sys.stderr)
    if report.ok():
        log.info("graph ok: %d nodes, %d devices", len(g.nodes), len(g.devices))
        return EXIT_OK
    return EXIT_FINDINGS


def _run_one_simulation(graph_path: str, profiles_path: str, config_path: str | None, out_dir: Path, top_k: int) -> float:
    g = parse_graph(_read_text(graph_path))
    report = validate(g)
    if not report.ok():
        for finding in report.findings:
            print(f"{finding.code}: {finding.message}", file=sys.stderr)
        raise _ValidationFailure()
    db = load_profiles(_read_text(profiles_path))
    cfg = parse_config(_read_text(config_path)) if config_path else StrategyConfig()

    # Expansion only when the strategy asks for it; a plain single-replica run
    # keeps the graph's own node ids in every output.
    if cfg.replicas > 1 or cfg.device_map:
        g = expand_data_parallel(g, cfg).graph
    table = estimate_all(g, db, cfg)
    schedule = simulate(g, table)
    summary = summarize(schedule, g, top_k=top_k)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.json").write_text(to_trace(schedule))
    (out_dir / "summary.txt").write_text(render_summary_text(summary))
    (out_dir / "summary.csv").write_text(render_summary_csv(summary))
    manifest = {
        "tool": "dfsim",
        "version": __version__,
        "command": "simulate",
        "inputs": {
            "graph": {"path": graph_path, "sha256": _sha256(graph_path)},
            "profiles": {"path": profiles_path, "sha256": _sha256(profiles_path)},
            "config": (
                {"path": config_path, "sha256": _sha256(config_path)} if config_path else None
            ),
        },
        "options": {
            "top_k": top_k,
            "replicas": cfg.replicas,
            "device_map": list(cfg.device_map),
            "collective": {"algo": cfg.collective.algo, "path": cfg.collective.path},
            "hardware": cfg.hardware,
            "op_gap_us": cfg.op_gap_us,
        },
        "outputs": ["trace.json", "summary.txt", "summary.csv"],
        "makespan_us": schedule.makespan_us,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return schedule.makespan_us


class _ValidationFailure(Exception):
    pass


def cmd_simulate(args) -> int:
    configs: list[str | None] = args.config or [None]
    out_root = Path(args.out)
    jobs = max(1, args.jobs)

    def run(config_path: str | None) -> float:
        out_dir = out_root if len(configs) == 1 else out_root / (Path(config_path).stem if config_path else "default")
        return _run_one_simulation(args.graph, args.profiles, config_path, out_dir, args.top_k)

    try:
        if jobs == 1 or len(configs) == 1:
            makespans = [run(c) for c in configs]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                makespans = list(pool.map(run, configs))
    except UnknownOpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        template = {"overrides": {nid: 0.0 for nid in sorted(exc.nodes)}}
        print("override-file template (merge into your config):", file=sys.stderr)
        print(json.dumps(template, indent=2))
        return EXIT_UNKNOWN_OP
    except _ValidationFailure:
        return EXIT_FINDINGS

    for makespan in makespans:
        print(f"{makespan / 1000.0:.2f}")
    return EXIT_OK


def cmd_fit(args) -> int:
    db = load_profiles(_read_text(args.profiles))
    model = fit_for_grid(db, args.op, args.hardware)
    if model is None:
        print(
            f"error: cannot fit {args.op!r} on {args.hardware!r}: "
            "grid missing, underdetermined, or degenerate",
            file=sys.stderr,
        )
        return EXIT_FIT
    for name, coef in zip(model.feature_names, model.coefficients):
        print(f"coefficient[{name}] = {coef:.9g}")
    print(f"intercept = {model.intercept:.9g}")
    stats = model.fit_stats
    print(
        f"r_squared = {stats.r_squared:.9g}  max_rel_residual = {stats.max_rel_residual:.9g}  "
        f"n_points = {stats.n_points}"
    )
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = parse_synth_spec(_read_text(args.spec))
    if args.seed is not None:
        import dataclasses

        spec = dataclasses.replace(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = gen_graph(spec)
    (out / "graph.json").write_text(serialize_graph(g))
    db = gen_profiles(spec)
    (out / "profiles.json").write_text(save_profiles(db))
    log.info("wrote %s and %s", out / "graph.json", out / "profiles.json")
    return EXIT_OK


def _read_csv_column(path: str, column: str) -> list[tuple[str, float]]:
    rows = []
    text = _read_text(path)
    reader = csv.DictReader(text.splitlines())
    for row in reader:
        if row.get("model") is None or row.get(column) is None:
            raise _IOFailure(f"{path}: expected columns model,{column}")
        rows.append((row["model"], float(row[column])))
    return rows


def cmd_compare(args) -> int:
    measured = _read_csv_column(args.measured, "measured_us")
    simulated = dict(_read_csv_column(args.simulated, "simulated_us"))
    rows = compare(measured, simulated)
    output = render_comparison(rows)
    print(output, end="")
    if args.out:
        Path(args.out).write_text(output)
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfsim",
        description="Estimate per-iteration training time by replaying a dataflow "
        "graph against an offline profiling database.",
    )
    parser.add_argument("--version", action="version", version=f"dfsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a graph document's invariants")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="estimate, expand, replay, and report")
    p.add_argument("--graph", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--config", action="append", help="strategy config; repeat for a sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--top-k", type=int, default=10, help="ops in the summary ranking")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep width")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit and print one op's linear cost model")
    p.add_argument("--profiles", required=True)
    p.add_argument("--op", required=True)
    p.add_argument("--hardware", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gen", help="generate synthetic graph and profile documents")
    p.add_argument("--spec", required=True, help="synth spec document")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compare", help="relative error of simulated vs measured times")
    p.add_argument("--measured", required=True, help="CSV with columns model,measured_us")
    p.add_argument("--simulated", required=True, help="CSV with columns model,simulated_us")
    p.add_argument("--out", default=None, help="also write the table to this file")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DFSIM_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DfsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
