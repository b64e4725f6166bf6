"""End-to-end driver: population, partitions, per-part solves, trees, policies, rollouts.

Every random stage draws from its own seed, derived from the root seed and
the stage name, so a stage can be rerun alone and still reproduce. Artifacts
hold no timestamps or timings; the manifest lists each file with its sha256.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import FORMAT_VERSION, __version__
from .errors import ConfigError, DcndpError, StageError
from .graph import Graph, count_khop_residual, write_edge_list
from .model import build_1dcndp, build_2dcndp, write_mps
from .graph import hop_pairs
from .policy import (baseline_policy, feature_table, node_records, realistic_override, train_tree,
                     tree_to_policy)
from .population import (Partition, bisect_partition, crossing_pairs, generate_population,
                         make_partition, split_by_rha, write_attributes)
from .rollout import compare_all, export_trace, restrict_trace, simulate, write_comparison
from .solvers import (DEFAULT_SOLVER_CMD, DcndpSolution, budget_from_fraction, external_solve,
                      preprocess_fix, solution_from_model, solve_bnb, solve_greedy, solve_model,
                      solve_oracle)

log = logging.getLogger(__name__)

METHODS = ("greedy", "bnb", "oracle", "milp", "external")


def stage_seed(root: int, stage: str) -> int:
    """Seed for one stage: the first 8 bytes of sha256("<root>:<stage>")."""
    return int.from_bytes(hashlib.sha256(f"{root}:{stage}".encode()).digest()[:8], "big")


@dataclass
class PipelineConfig:
    seed: int = 7
    n: int = 5000
    budget_frac: float = 0.20  # DCNDP deletion budget per partition
    max_part_size: int = 500
    ks: tuple[int, ...] = (1, 2)
    style: str = "agg"
    method: str = "greedy"
    solver_cmd: str | None = None
    time_limit: float = 60.0
    node_limit: int | None = 20000
    fixing: bool = True
    policy_k: int = 2  # which variant's whole-population tree becomes the DCNDP policy
    max_depth: int = 5
    min_leaf_prob: float = 0.5
    days: int = 100
    sim_budget_frac: float = 0.01
    baseline_policy: str | None = None
    output_dir: str = "pipeline-out"
    rha_weights: dict[str, float] | None = None

    def __post_init__(self):
        self.ks = tuple(self.ks)
        self.validate()

    def validate(self):
        for name in ("budget_frac", "sim_budget_frac", "min_leaf_prob"):
            val = getattr(self, name)
            if not 0 < val <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {val}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.max_part_size < 2:
            raise ConfigError("max_part_size must be at least 2")
        if not self.ks or any(k not in (1, 2) for k in self.ks):
            raise ConfigError(f"ks must be a nonempty subset of (1, 2), got {self.ks}")
        if self.policy_k not in self.ks:
            raise ConfigError("policy_k must be one of ks")
        if self.style not in ("agg", "disagg"):
            raise ConfigError(f"unknown constraint style {self.style!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.days < 0 or self.max_depth < 0:
            raise ConfigError("days and max_depth must be nonnegative")

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["ks"] = list(self.ks)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


# --- shared helpers (also used by the CLI) --------------------------------------


def solve_part(g: Graph, k: int, budget: int, method: str, *, fixing: bool = True, style: str = "agg",
               solver_cmd: str | None = None, time_limit: float | None = None,
               node_limit: int | None = None, workdir: Path | None = None) -> DcndpSolution:
    """Solve one graph with the named method; fixed nodes are never deleted."""
    forbidden = preprocess_fix(g, k, budget, simplicial=fixing) if fixing else frozenset()
    if method == "greedy":
        sol = solve_greedy(g, k, budget, forbidden=forbidden)
    elif method == "bnb":
        sol = solve_bnb(g, k, budget, time_limit=time_limit, node_limit=node_limit, forbidden=forbidden)
    elif method == "oracle":
        sol = solve_oracle(g, k, budget, forbidden=forbidden)
    elif method in ("milp", "external"):
        model = build_model(g, k, budget, style)
        if method == "milp":
            sol = solution_from_model(g, k, budget, solve_model(model, time_limit=time_limit))
        else:
            workdir = workdir or Path(".")
            mps = workdir / f"model_k{k}.mps"
            with open(mps, "wb") as fh:
                write_mps(model, fh)
            sol = external_solve(mps, solver_cmd or DEFAULT_SOLVER_CMD, time_limit or 60.0, g, k, budget)
    else:
        raise ConfigError(f"unknown method {method!r}")
    sol.extra["fixed"] = len(forbidden)
    return sol


def build_model(g: Graph, k: int, budget: int, style: str = "agg", relax: bool = False):
    if k == 1:
        return build_1dcndp(g, budget, relax_y=relax)
    return build_2dcndp(g, hop_pairs(g, 2), budget, style=style, relax_y=relax)


def solution_to_json(g: Graph, sol: DcndpSolution) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "k": sol.k,
        "budget": sol.budget,
        "objective": sol.objective,
        "lower_bound": sol.lower_bound,
        "gap_percent": sol.gap_percent,
        "provenance": sol.provenance,
        "deleted": sol.labels(g) if sol.is_integral else None,
    }


def check_format(doc: dict, what: str) -> None:
    found = doc.get("format_version")
    if found != FORMAT_VERSION:
        warnings.warn(f"{what}: format version {found!r} differs from {FORMAT_VERSION}; reading anyway",
                      stacklevel=2)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def version_info() -> str:
    return f"dcndp {__version__} (artifact format {FORMAT_VERSION})"


def _dump(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- the driver ----------------------------------------------------------------


@dataclass
class PipelineResult:
    output_dir: Path
    manifest: dict
    stages: list[str] = field(default_factory=list)

    @property
    def manifest_path(self) -> Path:
        return self.output_dir / "manifest.json"


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage in order. Failures raise StageError; finished artifacts stay on disk."""
    config.validate()
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    for sub in ("solutions", "trees", "policies", "traces", "comparisons", "models"):
        (out / sub).mkdir(exist_ok=True)
    artifacts: list[Path] = []
    done: list[str] = []
    state: dict[str, Any] = {}

    def stage(name: str, fn: Callable[[], None]):
        log.info("stage %s", name)
        try:
            fn()
        except StageError:
            raise
        except (DcndpError, OSError, ValueError) as exc:
            raise StageError(name, exc) from exc
        done.append(name)

    def write(rel: str, writer: Callable[[Any], None], mode: str = "w"):
        path = out / rel
        with open(path, mode, newline="" if mode == "w" else None) as fh:
            writer(fh)
        artifacts.append(path)

    # the output location is not part of the run's content; leaving it out keeps hashes comparable
    recorded = {k: v for k, v in config.to_json().items() if k != "output_dir"}
    _dump(out / "config.json", recorded)
    artifacts.append(out / "config.json")

    def gen():
        g = generate_population(stage_seed(config.seed, "gen-population"), config.n, config.rha_weights)
        state["g"] = g
        write("population.edges.tsv", lambda fh: write_edge_list(g, fh))
        write("population.attrs.csv", lambda fh: write_attributes(g, fh))

    def split():
        g = state["g"]
        rha = split_by_rha(g)
        state["rha"] = rha
        parts, keys = [], []
        for key, part in zip(rha.keys, rha.parts):
            if not part:
                continue
            sub = bisect_partition(g, part, config.max_part_size, stage_seed(config.seed, f"bisect:{key}"))
            parts.extend(sub.parts)
            keys.extend(f"{key}/{i}" for i in range(len(sub.parts)))
        final = make_partition(g, parts, keys)
        state["parts"] = final
        doc = final.to_json(g)
        doc["rha_crossing_edges"] = rha.crossing_edges
        doc["crossing_pairs_k2"] = crossing_pairs(g, final, 2)
        write("partitions.json", lambda fh: fh.write(json.dumps(doc, indent=2) + "\n"))

    def solve():
        g, parts = state["g"], state["parts"]
        state["solutions"] = {}
        for k in config.ks:
            deleted: list[int] = []
            rows = []
            for key, part in zip(parts.keys, parts.parts):
                sub, old = g.induced_subgraph(sorted(part))
                budget = budget_from_fraction(sub.n, config.budget_frac)
                sol = solve_part(sub, k, budget, config.method, fixing=config.fixing, style=config.style,
                                 solver_cmd=config.solver_cmd, time_limit=config.time_limit,
                                 node_limit=config.node_limit, workdir=out / "models")
                deleted.extend(old[v] for v in sol.deleted)
                rows.append({"part": key, "size": sub.n, "budget": budget, "objective": sol.objective,
                             "lower_bound": sol.lower_bound, "gap_percent": sol.gap_percent,
                             "fixed": sol.extra.get("fixed", 0)})
            deleted.sort()
            state["solutions"][k] = set(deleted)
            within = sum(r["objective"] for r in rows)
            doc = {
                "format_version": FORMAT_VERSION,
                "k": k,
                "method": config.method,
                "budget_frac": config.budget_frac,
                "parts": rows,
                "residual_within_parts": within,
                "residual_full_graph": count_khop_residual(g, deleted, k),
                "deleted": [g.label(v) for v in deleted],
            }
            doc["residual_dropped_by_partition"] = doc["residual_full_graph"] - within
            write(f"solutions/solution_k{k}.json", lambda fh, d=doc: fh.write(json.dumps(d, indent=2) + "\n"))

    def trees():
        g, rha = state["g"], state["rha"]
        records = node_records(g)
        state["records"] = records
        state["trees"] = {}
        scopes = [("all", list(g.nodes()))] + [(key, sorted(p)) for key, p in zip(rha.keys, rha.parts) if p]
        for k in config.ks:
            chosen = state["solutions"][k]
            for scope, nodes in scopes:
                feats = feature_table([records[v] for v in nodes])
                labels = [int(v in chosen) for v in nodes]
                tree = train_tree(feats, labels, config.max_depth)
                state["trees"][(k, scope)] = tree
                doc = tree.to_json()
                doc.update(k=k, scope=scope, training_accuracy=tree.accuracy(feats, labels))
                write(f"trees/tree_k{k}_{scope}.json", lambda fh, d=doc: fh.write(json.dumps(d, indent=2) + "\n"))

    def policies():
        tree = state["trees"][(config.policy_k, "all")]
        dcndp = tree_to_policy(tree, config.min_leaf_prob, name="dcndp")
        realistic = realistic_override(dcndp, attributes=list(state["records"][0]))
        base = baseline_policy(config.baseline_policy)
        state["policies"] = {"dcndp": dcndp, "dcndp-realistic": realistic, "baseline": base}
        for name, pol in state["policies"].items():
            write(f"policies/{name}.json", lambda fh, p=pol: fh.write(json.dumps(p.to_json(), indent=2) + "\n"))

    def sim():
        g = state["g"]
        seed = stage_seed(config.seed, "simulate")
        state["traces"] = {}
        for name, pol in state["policies"].items():
            tr = simulate(g, pol, config.days, config.sim_budget_frac, seed, records=state["records"])
            state["traces"][name] = tr
            write(f"traces/{name}.csv", lambda fh, t=tr: export_trace(t, fh))

    def comp():
        g, rha, traces = state["g"], state["rha"], state["traces"]
        base = traces["baseline"]
        for cand in ("dcndp", "dcndp-realistic"):
            a = traces[cand]
            rows = [("all", c) for c in compare_all(a, base)]
            # per-RHA rows use induced RHA subgraphs; cross-RHA edges are dropped
            for key, part in zip(rha.keys, rha.parts):
                if part:
                    ra, rb = restrict_trace(g, a, part), restrict_trace(g, base, part)
                    rows += [(f"rha:{key}", c) for c in compare_all(ra, rb)]
            write(f"comparisons/{cand}_vs_baseline.csv", lambda fh, r=rows: write_comparison(r, fh))

    for name, fn in (("gen-population", gen), ("split-by-rha", split), ("solve", solve), ("train-trees", trees),
                     ("policies", policies), ("simulate", sim), ("compare", comp)):
        stage(name, fn)

    entries = []
    for path in sorted(set(artifacts)):
        entries.append({"path": path.relative_to(out).as_posix(), "sha256": sha256_file(path),
                        "bytes": path.stat().st_size})
    manifest = {
        "format_version": FORMAT_VERSION,
        "version": __version__,
        "stages": done,
        "stage_seeds": {s: stage_seed(config.seed, s) for s in ("gen-population", "simulate")},
        "rha_metrics": "induced RHA subgraphs, cross-RHA edges dropped",
        "artifacts": entries,
    }
    _dump(out / "manifest.json", manifest)
    return PipelineResult(out, manifest, done)


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    check_format(doc, str(path))
    return doc


__all__ = ["PipelineConfig", "PipelineResult", "run_pipeline", "stage_seed", "solve_part", "build_model",
           "solution_to_json", "version_info", "read_manifest", "check_format", "Partition"]
