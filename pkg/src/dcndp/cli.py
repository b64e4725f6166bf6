"""Command-line entry point. Each subcommand only parses flags, calls the library and writes files."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DcndpError, SizeGuardError, StageError
from .graph import load_graph, write_edge_list
from .model import model_stats, write_mps
from .pipeline import (METHODS, PipelineConfig, build_model, check_format, run_pipeline, solution_to_json,
                       solve_part, version_info)
from .policy import feature_table, load_policy, node_records, realistic_override, train_tree, tree_to_policy
from .polyhedra import verify_proposition
from .population import bisect_partition, generate_population, make_partition, split_by_rha, write_attributes
from .rollout import compare_all, export_trace, read_trace, simulate, write_comparison
from .solvers import budget_from_fraction

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_SIZE = 0, 2, 3, 4
REPORT_COLUMNS = ("target", "required_budget", "membership", "tightness", "rank", "required_rank", "verdict")


def _attrs_path(graph: str, attrs: str | None) -> Path | None:
    """Explicit ``--attrs``, else ``X.attrs.csv`` next to ``X.edges.tsv`` when present."""
    if attrs:
        return Path(attrs)
    p = Path(graph)
    if p.name.endswith(".edges.tsv"):
        sib = p.with_name(p.name[: -len(".edges.tsv")] + ".attrs.csv")
        if sib.exists():
            return sib
    return None


def _load(args):
    ap = _attrs_path(args.graph, getattr(args, "attrs", None))
    with open(args.graph) as fh:
        if ap is None:
            return load_graph(fh)
        with open(ap) as fa:
            return load_graph(fh, fa)


def _budget(args, g) -> int:
    if args.budget is not None:
        return args.budget
    return budget_from_fraction(g.n, args.budget_frac)


def _write_json(path, doc):
    text = json.dumps(doc, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_gen_population(args, cfg):
    seed = args.seed if args.seed is not None else cfg.seed
    n = args.n if args.n is not None else cfg.n
    g = generate_population(seed, n, cfg.rha_weights)
    with open(f"{args.out_prefix}.edges.tsv", "w") as fh:
        write_edge_list(g, fh)
    with open(f"{args.out_prefix}.attrs.csv", "w", newline="") as fh:
        write_attributes(g, fh)
    print(f"{g.n} nodes, {g.m} edges -> {args.out_prefix}.edges.tsv, {args.out_prefix}.attrs.csv")


def cmd_partition(args, cfg):
    g = _load(args)
    if args.by_rha:
        first = split_by_rha(g)
        groups = [(k, p) for k, p in zip(first.keys, first.parts) if p]
    else:
        groups = [("all", frozenset(g.nodes()))]
    parts, keys = [], []
    for key, part in groups:
        sub = bisect_partition(g, part, args.max_size, args.seed)
        parts += sub.parts
        keys += [f"{key}/{i}" for i in range(len(sub.parts))]
    p = make_partition(g, parts, keys)
    _write_json(args.out, p.to_json(g))


def cmd_build_model(args, cfg):
    g = _load(args)
    model = build_model(g, args.k, _budget(args, g), args.style, args.relax)
    with open(args.out, "wb") as fh:
        write_mps(model, fh)
    print(json.dumps(model_stats(model).__dict__))


def cmd_solve(args, cfg):
    g = _load(args)
    sol = solve_part(g, args.k, _budget(args, g), args.method, fixing=args.fix_simplicial, style=args.style,
                     solver_cmd=args.solver_cmd, time_limit=args.time_limit, node_limit=args.node_limit,
                     workdir=Path(args.out).parent if args.out not in (None, "-") else Path("."))
    _write_json(args.out, solution_to_json(g, sol))


def cmd_verify_polyhedra(args, cfg):
    g = _load(args)
    reports = verify_proposition(g, args.budget, args.proposition)
    for r in reports:
        print(f"{r.verdict:16s} {r.target}  rank {r.rank}/{r.required_rank}")
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in reports:
                w.writerow([r.target, r.required_budget, r.membership_ok, r.tightness_ok, r.rank,
                            r.required_rank, r.verdict])
    return EXIT_OK if all(r.verdict != "fail" for r in reports) else EXIT_STAGE


def cmd_train_policy(args, cfg):
    g = _load(args)
    doc = json.loads(Path(args.solution).read_text())
    check_format(doc, args.solution)
    chosen = {g.index(lab) for lab in doc["deleted"] or ()}
    records = node_records(g)
    feats = feature_table(records)
    labels = [int(v in chosen) for v in g.nodes()]
    tree = train_tree(feats, labels, args.max_depth)
    policy = tree_to_policy(tree, args.min_leaf_prob)
    if args.realistic:
        policy = realistic_override(policy, attributes=list(records[0]))
    _write_json(args.out, policy.to_json())
    if args.tree_out:
        _write_json(args.tree_out, tree.to_json())
    print(policy.describe())


def cmd_simulate(args, cfg):
    g = _load(args)
    trace = simulate(g, load_policy(args.policy), args.days, args.budget_frac, args.seed)
    with open(args.out, "w", newline="") as fh:
        export_trace(trace, fh)


def cmd_compare(args, cfg):
    with open(args.a) as fa, open(args.b) as fb:
        a, b = read_trace(fa, "a"), read_trace(fb, "b")
    rows = [("all", c) for c in compare_all(a, b)]
    if args.out in (None, "-"):
        write_comparison(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_comparison(rows, fh)


def cmd_run_pipeline(args, cfg):
    doc = cfg.to_json()
    for key in ("seed", "n", "method", "output_dir"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    result = run_pipeline(PipelineConfig.from_json(doc))
    print(f"manifest: {result.manifest_path}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcndp", description="Distance-based critical node detection toolkit.")
    p.add_argument("--version", action="version", version=version_info())
    p.add_argument("--config", help="pipeline config JSON supplying defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def graph_args(sp):
        sp.add_argument("--graph", required=True, help="edge list file")
        sp.add_argument("--attrs", help="node attribute CSV (default: sibling .attrs.csv)")

    def budget_args(sp):
        grp = sp.add_mutually_exclusive_group()
        grp.add_argument("--budget", type=int)
        grp.add_argument("--budget-frac", type=float, default=0.2)

    sp = sub.add_parser("gen-population", help="generate a synthetic attributed network")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--out-prefix", required=True)
    sp.set_defaults(func=cmd_gen_population)

    sp = sub.add_parser("partition", help="split by RHA and bisect oversized parts")
    graph_args(sp)
    sp.add_argument("--by-rha", action="store_true")
    sp.add_argument("--max-size", type=int, default=2600)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("build-model", help="write a DCNDP model as MPS")
    graph_args(sp)
    sp.add_argument("--k", type=int, choices=(1, 2), default=1)
    budget_args(sp)
    sp.add_argument("--style", choices=("agg", "disagg"), default="agg")
    sp.add_argument("--relax", action="store_true", help="relax every column (LP)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_build_model)

    sp = sub.add_parser("solve", help="solve the DCNDP on a graph")
    graph_args(sp)
    sp.add_argument("--k", type=int, choices=(1, 2), default=1)
    budget_args(sp)
    sp.add_argument("--method", choices=METHODS, default="bnb")
    sp.add_argument("--style", choices=("agg", "disagg"), default="agg")
    sp.add_argument("--solver-cmd", help="external command with {mps} {sol} {timelimit}")
    sp.add_argument("--time-limit", type=float, default=60.0)
    sp.add_argument("--node-limit", type=int)
    sp.add_argument("--fix-simplicial", action="store_true", help="apply simplicial fixing first")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify-polyhedra", help="check dimension and facet certificates")
    graph_args(sp)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--proposition", type=int, choices=(1, 2, 3), required=True)
    sp.add_argument("--report", help="CSV report path")
    sp.set_defaults(func=cmd_verify_polyhedra)

    sp = sub.add_parser("train-policy", help="train a tree on a solution and turn it into a policy")
    graph_args(sp)
    sp.add_argument("--solution", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--realistic", action="store_true")
    sp.add_argument("--max-depth", type=int, default=5)
    sp.add_argument("--min-leaf-prob", type=float, default=0.5)
    sp.add_argument("--tree-out")
    sp.set_defaults(func=cmd_train_policy)

    sp = sub.add_parser("simulate", help="run a budgeted rollout")
    graph_args(sp)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--days", type=int, default=100)
    sp.add_argument("--budget-frac", type=float, default=0.01)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="compare candidate trace A against baseline B")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("run-pipeline", help="run every stage and write a manifest")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--method", choices=METHODS)
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_run_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        rc = args.func(args, cfg)
        return EXIT_OK if rc is None else rc
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, SizeGuardError):
            return EXIT_SIZE
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_STAGE
    except SizeGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DcndpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
