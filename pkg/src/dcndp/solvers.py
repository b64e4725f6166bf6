"""Exact, heuristic and external solvers for the k-hop DCNDP (k in {1, 2})."""

from __future__ import annotations

import itertools
import math
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConsistencyError, DomainError, SizeGuardError, SolutionFormatError, SolverError
from .graph import Graph, count_khop_residual
from .model import BINARY, MipModel

ORACLE_MAX_NODES = 24

DEFAULT_SOLVER_CMD = f"{shlex.quote(sys.executable)} -m dcndp.highs_runner {{mps}} {{sol}} {{timelimit}}"


@dataclass(frozen=True)
class DcndpSolution:
    """A deletion set and its audited residual pair count.

    ``deleted`` and ``objective`` are None for LP-only external results,
    where only ``lower_bound`` is meaningful.
    """

    deleted: tuple[int, ...] | None
    objective: int | None
    lower_bound: float
    gap_percent: float
    provenance: str
    k: int
    budget: int
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def is_integral(self) -> bool:
        return self.deleted is not None

    def labels(self, g: Graph) -> list[str]:
        return [g.label(v) for v in self.deleted or ()]


def opt_gap(objective: float, bound: float, tol: float = 1e-9) -> float:
    """Relative optimality gap in percent for a minimisation problem."""
    if bound > objective + tol:
        raise ConsistencyError(f"bound {bound} exceeds objective {objective}")
    if objective <= 0:
        return 0.0
    if bound <= 0:
        return 100.0
    return max(0.0, 100.0 * (objective - bound) / objective)


def budget_from_fraction(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise DomainError(f"budget fraction must lie in (0, 1], got {fraction}")
    # tolerate binary-float noise such as 0.2 * 5 = 1.0000000000000002
    return int(math.floor(fraction * n + 1e-9))


def _check_k(k):
    if k not in (1, 2):
        raise DomainError(f"k must be 1 or 2, got {k}")


def _finish(g, k, budget, deleted, bound, provenance, t0, **extra) -> DcndpSolution:
    deleted = tuple(sorted(deleted))
    if len(deleted) > budget:
        raise ConsistencyError(f"{provenance} solution deletes {len(deleted)} > budget {budget}")
    obj = count_khop_residual(g, deleted, k)
    bound = min(float(bound), obj)
    return DcndpSolution(deleted, obj, bound, opt_gap(obj, bound), provenance, k, budget,
                         time.perf_counter() - t0, extra)


# --- bitmask helpers for small exact searches ------------------------------


def _masks(g: Graph) -> list[int]:
    out = []
    for v in g.nodes():
        m = 0
        for w in g.neighbors(v):
            m |= 1 << w
        out.append(m)
    return out


def _count_mask(nbr: list[int], alive: int, k: int) -> int:
    total = 0
    a = alive
    while a:
        low = a & -a
        u = low.bit_length() - 1
        a ^= low
        near = nbr[u] & alive
        if k == 2:
            reach = near
            b = near
            while b:
                lw = b & -b
                reach |= nbr[lw.bit_length() - 1]
                b ^= lw
            near = reach & alive & ~low
        total += bin(near).count("1")
    return total // 2


def _coverage_mask(nbr: list[int], alive: int, v: int, k: int) -> int:
    """Upper bound on the pairs destroyed by deleting ``v`` in any superset deletion."""
    near = nbr[v] & alive
    if k == 1:
        return bin(near).count("1")
    reach = near
    b = near
    inner = 0
    while b:
        lw = b & -b
        w = lw.bit_length() - 1
        reach |= nbr[w]
        inner += bin(nbr[w] & near).count("1")
        b ^= lw
    reach &= alive & ~(1 << v)
    d = bin(near).count("1")
    nonadjacent = d * (d - 1) // 2 - inner // 2
    return bin(reach).count("1") + nonadjacent


# --- solvers --------------------------------------------------------------


def solve_oracle(g: Graph, k: int, budget: int, max_nodes: int = ORACLE_MAX_NODES,
                 forbidden: Iterable[int] = ()) -> DcndpSolution:
    """Enumerate every deletion set of size <= budget; ties go to the lexicographically smallest."""
    _check_k(k)
    if g.n > max_nodes:
        raise SizeGuardError(f"oracle refuses n={g.n} > {max_nodes}; raise max_nodes to override")
    t0 = time.perf_counter()
    forbidden = set(forbidden)
    cands = [v for v in g.nodes() if v not in forbidden]
    budget = max(0, budget)
    nbr = _masks(g)
    full = (1 << g.n) - 1
    best_obj, best = None, ()
    for size in range(min(budget, len(cands)) + 1):
        for combo in itertools.combinations(cands, size):
            alive = full
            for v in combo:
                alive &= ~(1 << v)
            obj = _count_mask(nbr, alive, k)
            if best_obj is None or obj < best_obj or (obj == best_obj and combo < best):
                best_obj, best = obj, combo
    sol = _finish(g, k, budget, best, best_obj, "oracle", t0)
    if sol.objective != best_obj:
        raise ConsistencyError("oracle count disagrees with count_khop_residual")
    return sol


def _greedy_deletions(g: Graph, k: int, budget: int, forbidden=frozenset()) -> list[int]:
    n = g.n
    adj = [g.neighbors(v) for v in g.nodes()]
    alive = np.ones(n, dtype=bool)
    # live common-neighbour counts of non-adjacent pairs, only needed for k=2
    common: dict[tuple[int, int], int] = {}
    if k == 2:
        for w in range(n):
            nb = sorted(adj[w])
            for i, a in enumerate(nb):
                for b in nb[i + 1:]:
                    if b not in adj[a]:
                        common[(a, b)] = common.get((a, b), 0) + 1

    def gain(v):
        near = [w for w in adj[v] if alive[w]]
        if k == 1:
            return len(near)
        reach = set(near)
        for w in near:
            reach.update(x for x in adj[w] if alive[x])
        reach.discard(v)
        near.sort()
        sole = 0
        for i, a in enumerate(near):
            for b in near[i + 1:]:
                if common.get((a, b)) == 1:
                    sole += 1
        return len(reach) + sole

    gains = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if v not in forbidden:
            gains[v] = gain(v)
    chosen = []
    while len(chosen) < budget:
        u = int(np.argmax(gains))  # first maximum -> smallest id on ties
        if gains[u] <= 0:
            break
        chosen.append(u)
        if k == 1:
            affected = {w for w in adj[u] if alive[w]}
        else:
            affected = set()
            for w in adj[u]:
                if alive[w]:
                    affected.add(w)
                    affected.update(x for x in adj[w] if alive[x])
            near = sorted(w for w in adj[u] if alive[w])
            for i, a in enumerate(near):
                for b in near[i + 1:]:
                    if (a, b) in common:
                        common[(a, b)] -= 1
        alive[u] = False
        gains[u] = -1
        affected.discard(u)
        for w in affected:
            if w not in forbidden:
                gains[w] = gain(w)
    return chosen


def solve_greedy(g: Graph, k: int, budget: int, forbidden: Iterable[int] = ()) -> DcndpSolution:
    """Repeatedly delete the node with the largest marginal drop in residual pairs."""
    _check_k(k)
    t0 = time.perf_counter()
    chosen = _greedy_deletions(g, k, max(0, budget), frozenset(forbidden))
    return _finish(g, k, budget, chosen, 0, "greedy", t0)


class _Abort(Exception):
    pass


def solve_bnb(g: Graph, k: int, budget: int, time_limit: float | None = None,
              node_limit: int | None = None, forbidden: Iterable[int] = ()) -> DcndpSolution:
    """Depth-first branch and bound on node deletions.

    Nodes are branched in descending degree order, deletion first. A node's
    bound is its residual count minus the largest ``remaining budget``
    single-node coverages among undecided nodes. The greedy solution seeds the
    incumbent. If a time or node limit stops the search, the returned lower
    bound is the smallest bound over the still-open subtrees.
    """
    _check_k(k)
    t0 = time.perf_counter()
    budget = max(0, budget)
    forbidden = frozenset(forbidden)
    greedy = _greedy_deletions(g, k, budget, forbidden)
    nbr = _masks(g)
    full = (1 << g.n) - 1

    def alive_without(dels):
        a = full
        for v in dels:
            a &= ~(1 << v)
        return a

    best_dels = tuple(sorted(greedy))
    best_obj = _count_mask(nbr, alive_without(best_dels), k)
    order = sorted((v for v in g.nodes() if v not in forbidden), key=lambda v: (-g.degree(v), v))
    deadline = None if time_limit is None else t0 + time_limit
    explored = 0
    # stack entries: (position in order, alive mask, deleted tuple, remaining budget, parent bound)
    stack = [(0, full, (), budget, -math.inf)]
    aborted_bound = math.inf
    try:
        while stack:
            if (deadline is not None and time.perf_counter() > deadline) or (
                node_limit is not None and explored >= node_limit
            ):
                raise _Abort
            i, alive, dels, r, _ = stack.pop()
            explored += 1
            obj = _count_mask(nbr, alive, k)
            if obj < best_obj:
                best_obj, best_dels = obj, tuple(sorted(dels))
            if r == 0 or i >= len(order) or obj == 0:
                continue
            covs = sorted((_coverage_mask(nbr, alive, v, k) for v in order[i:]), reverse=True)
            bound = max(0, obj - sum(covs[:r]))
            if bound >= best_obj:
                continue
            v = order[i]
            stack.append((i + 1, alive, dels, r, bound))
            stack.append((i + 1, alive & ~(1 << v), dels + (v,), r - 1, bound))
    except _Abort:
        aborted_bound = min(entry[4] for entry in stack) if stack else math.inf
    complete = not stack
    lower = best_obj if complete else max(0.0, min(best_obj, aborted_bound))
    return _finish(g, k, budget, best_dels, lower, "bnb", t0, nodes=explored, complete=complete)


# --- preprocessing --------------------------------------------------------


def _is_simplicial(g: Graph, v: int) -> bool:
    nb = sorted(g.neighbors(v))
    return all(b in g.neighbors(a) for i, a in enumerate(nb) for b in nb[i + 1:])


def preprocess_fix(g: Graph, k: int, budget: int | None = None, simplicial: bool = False) -> frozenset[int]:
    """Nodes whose deletion variable can be fixed to zero without losing optimality.

    Isolated nodes are always fixed. With ``simplicial`` enabled, a simplicial
    node is also fixed when none of its neighbours is simplicial; deleting it
    can always be exchanged for deleting a neighbour, or for any free node once
    it is isolated. Simplicial fixing is skipped when fewer than ``budget``
    nodes would remain free.
    """
    _check_k(k)
    isolated = {v for v in g.nodes() if g.degree(v) == 0}
    if not simplicial:
        return frozenset(isolated)
    simp = {v for v in g.nodes() if g.degree(v) > 0 and _is_simplicial(g, v)}
    fixed = {v for v in simp if not (g.neighbors(v) & simp)} | isolated
    if budget is not None and g.n - len(fixed) < budget:
        return frozenset(isolated)
    return frozenset(fixed)


# --- model solving --------------------------------------------------------


def _parse_solution(path: Path) -> tuple[dict[str, float], dict[str, float]]:
    values: dict[str, float] = {}
    info: dict[str, float] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SolutionFormatError(f"cannot read solution file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] in ("objective", "bound"):
                try:
                    info[parts[0]] = float(parts[1])
                except ValueError:
                    pass
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionFormatError(f"{path}:{lineno}: expected 'name value', got {raw!r}")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise SolutionFormatError(f"{path}:{lineno}: non-numeric value {parts[1]!r}") from None
    if not values:
        raise SolutionFormatError(f"{path}: no variable values found")
    return values, info


def _mps_is_integer(mps_path: Path) -> bool:
    with open(mps_path, encoding="utf-8") as fh:
        return any("INTORG" in line for line in fh)


def external_solve(mps_path, solver_cmd: str, time_limit: float, g: Graph, k: int,
                   budget: int | None = None) -> DcndpSolution:
    """Run an external MPS solver and audit its answer against ``g``.

    ``solver_cmd`` is a template with ``{mps}``, ``{sol}`` and ``{timelimit}``
    placeholders; the solver must write ``name value`` lines to ``{sol}``.
    Optional ``# objective X`` and ``# bound X`` comment lines are read.
    """
    _check_k(k)
    mps_path = Path(mps_path)
    for ph in ("{mps}", "{sol}", "{timelimit}"):
        if ph not in solver_cmd:
            raise DomainError(f"solver command template lacks {ph}")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="dcndp-sol-") as tmp:
        sol_path = Path(tmp) / "solution.sol"
        argv = [
            part.format(mps=str(mps_path), sol=str(sol_path), timelimit=str(time_limit))
            for part in shlex.split(solver_cmd)
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as exc:
            raise SolverError(f"cannot launch solver: {exc}", str(exc)) from exc
        if proc.returncode != 0:
            raise SolverError(f"solver exited with status {proc.returncode}",
                              (proc.stdout or "") + (proc.stderr or ""))
        values, info = _parse_solution(sol_path)
    if budget is None:
        budget = g.n
    if not _mps_is_integer(mps_path):
        bound = info.get("objective", info.get("bound"))
        if bound is None:
            bound = sum(v for name, v in values.items() if name.startswith("x_"))
        return DcndpSolution(None, None, float(bound), float("nan"), "external", k, budget,
                             time.perf_counter() - t0, {"y": {n: v for n, v in values.items()
                                                             if n.startswith("y_")}})
    deleted = []
    for name, val in values.items():
        if name.startswith("y_") and val >= 0.5:
            v = int(name[2:])
            if not 0 <= v < g.n:
                raise SolutionFormatError(f"solution references node id {v} outside the graph")
            deleted.append(v)
    reported = info.get("objective")
    obj = count_khop_residual(g, deleted, k)
    bound = info.get("bound", reported if reported is not None else obj)
    return _finish(g, k, budget, deleted, bound, "external", t0, reported_objective=reported)


@dataclass(frozen=True)
class ModelResult:
    status: str
    objective: float
    bound: float
    values: dict[str, float]


def solve_model(model: MipModel, relax: bool = False, time_limit: float | None = None) -> ModelResult:
    """Solve a MipModel in-process with scipy's HiGHS ``milp`` wrapper."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import coo_matrix

    idx = model.variable_index()
    nv = len(model.variables)
    c = np.array([v.obj for v in model.variables], dtype=float)
    ub = np.array([np.inf if v.upper is None else v.upper for v in model.variables])
    integrality = np.array([0 if relax else int(v.kind == BINARY) for v in model.variables])
    rows, cols, data, lo, hi = [], [], [], [], []
    for r, con in enumerate(model.constraints):
        for var, coef in con.terms:
            rows.append(r)
            cols.append(idx[var])
            data.append(coef)
        lo.append(con.rhs if con.sense in (">=", "=") else -np.inf)
        hi.append(con.rhs if con.sense in ("<=", "=") else np.inf)
    constraints = []
    if model.constraints:
        a = coo_matrix((data, (rows, cols)), shape=(len(model.constraints), nv)).tocsr()
        constraints.append(LinearConstraint(a, lo, hi))
    options = {} if time_limit is None else {"time_limit": time_limit}
    res = milp(c, constraints=constraints, integrality=integrality, bounds=Bounds(0, ub), options=options)
    if res.x is None:
        raise SolverError(f"scipy milp failed: {res.message}")
    bound = getattr(res, "mip_dual_bound", None)
    if bound is None or relax or not np.isfinite(bound):
        bound = res.fun
    values = {v.name: float(x) for v, x in zip(model.variables, res.x)}
    return ModelResult("optimal" if res.status == 0 else str(res.status), float(res.fun), float(bound), values)


def solution_from_model(g: Graph, k: int, budget: int, result: ModelResult, provenance="milp") -> DcndpSolution:
    t0 = time.perf_counter()
    deleted = [int(n[2:]) for n, v in result.values.items() if n.startswith("y_") and v >= 0.5]
    return _finish(g, k, budget, deleted, min(result.bound, result.objective), provenance, t0)
