"""Command-line entry point.

Exit codes: 0 success, 1 a verification found a violated bound or property
(with ``--strict``), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bruteforce, ic
from .core import load_instance
from .exceptions import AsmlError, ConfigError
from .harness import ExperimentConfig, emit_csv, emit_plot_data, run_experiment
from .verify import REGIMES, verify_ratios


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asml", description="Two-phase adaptive submodular meta-learning tools.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run-experiment", help="train and test policies on IC tasks")
    run.add_argument("--config", required=True, help="experiment config JSON")
    run.add_argument("--output", help="CSV path for per-repetition rows")
    run.add_argument("--plot-data", help="JSON path for per-panel plot series")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--repetitions", type=int, help="override the repetition count")
    run.add_argument("--json", action="store_true", help="print machine-readable results")

    ver = sub.add_parser("verify-ratios", help="compare policies with the exact optimum on tiny instances")
    ver.add_argument("--regime", choices=REGIMES, default="monotone")
    ver.add_argument("--count", type=int, default=50)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--json", action="store_true")

    chk = sub.add_parser("check-submodularity", help="exhaustively check adaptive submodularity")
    src = chk.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance JSON file")
    src.add_argument(
        "--remark2", "--training-average", dest="training_average", action="store_true",
        help="the two-item training-average counterexample",
    )
    chk.add_argument("--strict", action="store_true", help="exit 1 when a violation is found")
    chk.add_argument("--json", action="store_true")

    gen = sub.add_parser("gen-graph", help="write a random graph as an edge list")
    gen.add_argument("--kind", choices=sorted(ic.GRAPH_KINDS), default="ba")
    gen.add_argument("--size", type=int, required=True, help="number of nodes")
    gen.add_argument("--edges", type=int, help="edge count (gnm only)")
    gen.add_argument("--attach", type=int, default=2, help="edges per new node (ba only)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output", required=True)
    gen.add_argument("--json", action="store_true")
    return p


def _emit(doc: dict, as_json: bool, lines: list[str]):
    if as_json:
        print(json.dumps(doc, sort_keys=True))
    else:
        print("\n".join(lines))


def _run_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.repetitions is not None:
        config.repetitions = args.repetitions
    config.validate()
    table = run_experiment(config)
    if args.output:
        emit_csv(table, args.output)
    if args.plot_data:
        emit_plot_data(table, args.plot_data)
    lines = [f"{s['algorithm']:>15} l={s['l']:<3} k={s['k']:<3} mean={s['mean']:.4f} stderr={s['stderr']:.4f}" for s in table.summarize()]
    _emit(table.to_dict(include_wall=False), args.json, lines)
    return 0


def _verify(args) -> int:
    report = verify_ratios(args.count, args.seed, args.regime)
    lines = [
        f"regime {report['regime']}: {report['count']} instances",
        f"min ratio {report['min_ratio']:.6f} (bound {report['min_bound']:.6f}), mean ratio {report['mean_ratio']:.6f}",
        f"violations: {len(report['violations'])}",
    ]
    _emit(report, args.json, lines)
    return 0 if report["passed"] else 1


def _check(args) -> int:
    if args.training_average:
        task, prior = bruteforce.training_average_objective()
        reports = [bruteforce.check_adaptive_submodularity(task, prior)]
    else:
        tasks, prior = load_instance(Path(args.instance))
        reports = [bruteforce.check_adaptive_submodularity(t, prior) for t in tasks]
    doc = {"holds": all(r.holds for r in reports), "tasks": [r.to_dict() for r in reports]}
    lines = []
    for i, r in enumerate(reports):
        pairs = ", ".join(f"({a:g}, {b:g})" for a, b in r.pairs())
        lines.append(f"task {i}: {'holds' if r.holds else 'violated'} ({len(r.violations)} violations) {pairs}".rstrip())
    _emit(doc, args.json, lines)
    return 1 if args.strict and not doc["holds"] else 0


def _gen_graph(args) -> int:
    g = ic.make_graph(args.kind, args.size, edges=args.edges, attach=args.attach, seed=args.seed)
    Path(args.output).write_text(g.to_edge_list())
    doc = {"kind": args.kind, "nodes": g.node_count, "edges": g.edge_count, "output": args.output}
    _emit(doc, args.json, [f"wrote {g.node_count} nodes, {g.edge_count} edges to {args.output}"])
    return 0


COMMANDS = {
    "run-experiment": _run_experiment,
    "verify-ratios": _verify,
    "check-submodularity": _check,
    "gen-graph": _gen_graph,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, AsmlError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
