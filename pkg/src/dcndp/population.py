"""Synthetic attributed contact networks and graph decomposition.

The generator is a small stand-in for an agent-based population model:
household cliques, school classes, workplaces and a sprinkle of community
contacts, all mostly confined to a regional health authority (RHA).
Partitioning splits by RHA and then recursively bisects oversized parts.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigError, DomainError
from .graph import Graph, edge_squared

RHAS = ("East", "Central", "West", "LaGr")
# rough regional shares of the provincial population
DEFAULT_RHA_WEIGHTS = {"East": 0.60, "Central": 0.18, "West": 0.15, "LaGr": 0.07}


@dataclass(frozen=True)
class NodeAttributes:
    age: int
    rha: str
    is_healthcare_worker: bool
    is_urgent_care_patient: bool
    is_long_term_care: bool
    household_id: int
    workplace_id: int | None = None
    school_id: int | None = None

    def __post_init__(self):
        if self.age < 0:
            raise DomainError(f"negative age {self.age}")
        if self.rha not in RHAS:
            raise DomainError(f"unknown RHA {self.rha!r}")
        if self.school_id is not None and not 4 <= self.age <= 22:
            raise DomainError(f"school_id set for age {self.age}")
        if self.school_id is not None and self.workplace_id is not None:
            raise DomainError("a node cannot have both a workplace and a school")

    @classmethod
    def csv_fields(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> dict[str, str]:
        row = {}
        for k, v in asdict(self).items():
            if v is None:
                row[k] = ""
            elif isinstance(v, bool):
                row[k] = "1" if v else "0"
            else:
                row[k] = str(v)
        return row

    @classmethod
    def from_row(cls, row: dict) -> "NodeAttributes":
        def opt(key):
            val = row.get(key, "")
            return int(val) if val not in ("", None) else None

        def flag(key):
            return str(row[key]).strip().lower() in ("1", "true", "yes")

        try:
            return cls(
                age=int(row["age"]),
                rha=row["rha"],
                is_healthcare_worker=flag("is_healthcare_worker"),
                is_urgent_care_patient=flag("is_urgent_care_patient"),
                is_long_term_care=flag("is_long_term_care"),
                household_id=int(row["household_id"]),
                workplace_id=opt("workplace_id"),
                school_id=opt("school_id"),
            )
        except (KeyError, ValueError) as exc:
            raise DomainError(f"bad attribute row {row}: {exc}") from exc


@dataclass(frozen=True)
class MixingConfig:
    household_size_weights: tuple[float, ...] = (0.28, 0.34, 0.16, 0.14, 0.06, 0.02)
    workplace_max: int = 20
    school_max: int = 25
    employment_rate: float = 0.75
    school_rate_child: float = 0.95  # ages 4-17
    school_rate_young_adult: float = 0.40  # ages 18-22
    community_degree: float = 2.0  # mean number of community contacts per node
    community_within_rha: float = 0.97
    healthcare_worker_share: float = 0.04
    urgent_care_share: float = 0.02
    long_term_care_share: float = 0.01

    def validate(self):
        w = self.household_size_weights
        if not w or any(x < 0 for x in w) or not np.isclose(sum(w), 1.0):
            raise ConfigError("household size weights must be nonnegative and sum to 1")
        if self.workplace_max < 2 or self.school_max < 2:
            raise ConfigError("workplace and school caps must be at least 2")
        for name in ("employment_rate", "school_rate_child", "school_rate_young_adult",
                     "community_within_rha", "healthcare_worker_share", "urgent_care_share",
                     "long_term_care_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.community_degree < 0:
            raise ConfigError("community_degree must be nonnegative")


def _check_weights(rha_weights) -> np.ndarray:
    if rha_weights is None:
        rha_weights = DEFAULT_RHA_WEIGHTS
    if set(rha_weights) - set(RHAS):
        raise ConfigError(f"unknown RHA keys {sorted(set(rha_weights) - set(RHAS))}")
    w = np.array([float(rha_weights.get(r, 0.0)) for r in RHAS])
    if (w < 0).any() or not np.isclose(w.sum(), 1.0):
        raise ConfigError("RHA weights must be nonnegative and sum to 1")
    return w / w.sum()


def _clique(members: Sequence[int]) -> Iterable[tuple[int, int]]:
    for i, a in enumerate(members):
        for b in members[i + 1:]:
            yield a, b


def _chunk(items: list[int], sizes_rng, cap: int, fixed: bool) -> list[list[int]]:
    groups, i = [], 0
    while i < len(items):
        size = cap if fixed else int(sizes_rng())
        groups.append(items[i:i + size])
        i += size
    return groups


def generate_population(seed, n: int, rha_weights=None, mixing_config: MixingConfig | None = None) -> Graph:
    """Deterministic synthetic contact network with NodeAttributes on every node."""
    if n < 1:
        raise ConfigError("population size must be at least 1")
    cfg = mixing_config or MixingConfig()
    cfg.validate()
    weights = _check_weights(rha_weights)
    rng = np.random.default_rng(seed)

    hh_sizes = np.arange(1, len(cfg.household_size_weights) + 1)
    rha = np.empty(n, dtype=np.int64)
    age = np.empty(n, dtype=np.int64)
    household = np.empty(n, dtype=np.int64)
    households: list[list[int]] = []
    v = 0
    while v < n:
        size = min(int(rng.choice(hh_sizes, p=cfg.household_size_weights)), n - v)
        members = list(range(v, v + size))
        region = int(rng.choice(len(RHAS), p=weights))
        head = int(rng.integers(20, 91))
        for j, w in enumerate(members):
            rha[w] = region
            household[w] = len(households)
            if j == 0:
                age[w] = head
            elif j == 1:
                age[w] = int(np.clip(head + rng.normal(0, 4), 18, 100))
            elif head < 65:
                age[w] = int(rng.integers(0, min(23, head - 17)))
            else:
                age[w] = int(rng.integers(18, 60))
        households.append(members)
        v += size

    edges: list[tuple[int, int]] = []
    for members in households:
        edges.extend(_clique(members))

    school = np.full(n, -1, dtype=np.int64)
    work = np.full(n, -1, dtype=np.int64)
    u = rng.random(n)
    child = (age >= 4) & (age <= 17) & (u < cfg.school_rate_child)
    young = (age >= 18) & (age <= 22) & (u < cfg.school_rate_young_adult)
    students = child | young
    working_age = (age >= 18) & (age <= 64) & ~students
    workers = working_age & (rng.random(n) < cfg.employment_rate)

    # healthcare workers are drawn from the employed and work together
    worker_ids = np.flatnonzero(workers)
    n_hcw = min(int(round(cfg.healthcare_worker_share * n)), len(worker_ids))
    hcw = np.zeros(n, dtype=bool)
    if n_hcw:
        hcw[rng.choice(worker_ids, size=n_hcw, replace=False)] = True

    n_school = n_work = 0
    for r in range(len(RHAS)):
        in_r = rha == r
        pupils = np.flatnonzero(students & in_r)
        pupils = pupils[np.lexsort((pupils, age[pupils]))]
        for cls in _chunk(list(pupils), None, cfg.school_max, fixed=True):
            school[cls] = n_school
            n_school += 1
            edges.extend(_clique(cls))
        for pool in (np.flatnonzero(workers & in_r & hcw), np.flatnonzero(workers & in_r & ~hcw)):
            pool = list(rng.permutation(pool))
            for grp in _chunk(pool, lambda: rng.integers(2, cfg.workplace_max + 1), cfg.workplace_max, False):
                work[grp] = n_work
                n_work += 1
                edges.extend(_clique(grp))

    # community contacts, mostly within the RHA
    n_contacts = rng.poisson(cfg.community_degree / 2.0, size=n)
    by_rha = [np.flatnonzero(rha == r) for r in range(len(RHAS))]
    for a in np.flatnonzero(n_contacts):
        for _ in range(int(n_contacts[a])):
            pool = by_rha[rha[a]] if rng.random() < cfg.community_within_rha else None
            b = int(rng.choice(pool)) if pool is not None else int(rng.integers(n))
            if b != a:
                edges.append((int(a), b))

    n_urgent = int(round(cfg.urgent_care_share * n))
    urgent = np.zeros(n, dtype=bool)
    if n_urgent:
        p = (age + 1.0) / (age + 1.0).sum()
        urgent[rng.choice(n, size=n_urgent, replace=False, p=p)] = True
    n_ltc = int(round(cfg.long_term_care_share * n))
    ltc = np.zeros(n, dtype=bool)
    if n_ltc:
        elders = np.flatnonzero((age >= 70) & ~workers & ~students)
        pool = elders if len(elders) >= n_ltc else np.arange(n)
        ltc[rng.choice(pool, size=n_ltc, replace=False)] = True

    attrs = [
        NodeAttributes(
            age=int(age[i]),
            rha=RHAS[rha[i]],
            is_healthcare_worker=bool(hcw[i]),
            is_urgent_care_patient=bool(urgent[i]),
            is_long_term_care=bool(ltc[i]),
            household_id=int(household[i]),
            workplace_id=int(work[i]) if work[i] >= 0 else None,
            school_id=int(school[i]) if school[i] >= 0 else None,
        )
        for i in range(n)
    ]
    return Graph([str(i) for i in range(n)], edges, None, attrs)


def write_attributes(g: Graph, sink: TextIO) -> None:
    cols = NodeAttributes.csv_fields()
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["node_id"] + cols)
    for v in g.nodes():
        rec = g.attributes[v]
        row = rec.to_row() if isinstance(rec, NodeAttributes) else {k: str(rec.get(k, "")) for k in cols}
        writer.writerow([g.label(v)] + [row[c] for c in cols])


# --- partitioning --------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    parts: tuple[frozenset[int], ...]
    crossing_edges: int
    part_of: dict[int, int] = field(compare=False)
    keys: tuple[str, ...] = ()

    def sizes(self) -> list[int]:
        return [len(p) for p in self.parts]

    def to_json(self, g: Graph) -> dict:
        return {
            "parts": [[g.label(v) for v in sorted(p)] for p in self.parts],
            "keys": list(self.keys),
            "crossing_edges": self.crossing_edges,
        }


def _crossing(g: Graph, part_of: dict[int, int]) -> int:
    return sum(
        1 for u, v in g.edges if u in part_of and v in part_of and part_of[u] != part_of[v]
    )


def make_partition(g: Graph, parts: Sequence[Iterable[int]], keys: Sequence[str] = ()) -> Partition:
    parts = tuple(frozenset(p) for p in parts)
    part_of = {}
    for i, p in enumerate(parts):
        for v in p:
            if v in part_of:
                raise DomainError(f"node {v} appears in two parts")
            part_of[v] = i
    return Partition(parts, _crossing(g, part_of), part_of, tuple(keys))


def split_by_rha(g: Graph) -> Partition:
    """Four parts keyed by RHA (possibly empty); inter-RHA edges count as crossing."""
    if g.attributes is None:
        raise DomainError("graph has no node attributes")
    buckets = {r: [] for r in RHAS}
    for v in g.nodes():
        rec = g.attributes[v]
        rha = getattr(rec, "rha", None) if rec is not None else None
        if rha is None and isinstance(rec, dict):
            rha = rec.get("rha")
        if rha not in buckets:
            raise DomainError(f"node {g.label(v)!r} has no valid rha attribute")
        buckets[rha].append(v)
    return make_partition(g, [buckets[r] for r in RHAS], RHAS)


def crossing_pairs(g: Graph, partition: Partition, k: int = 2) -> int:
    """Pairs within ``k`` hops whose endpoints fall in different parts (ignored by per-part solves)."""
    pairs = g.edges if k == 1 else edge_squared(g).pairs
    po = partition.part_of
    return sum(1 for u, v in pairs if po.get(u, -1) != po.get(v, -2))


def _bfs_half(g: Graph, nodes: list[int], start: int) -> set[int]:
    members = set(nodes)
    half = len(nodes) // 2
    grown: set[int] = set()
    queue = deque([start])
    seen = {start}
    remaining = iter(nodes)
    while len(grown) < half:
        if not queue:
            nxt = next(w for w in remaining if w not in seen)
            seen.add(nxt)
            queue.append(nxt)
        v = queue.popleft()
        grown.add(v)
        for w in sorted(g.neighbors(v)):
            if w in members and w not in seen:
                seen.add(w)
                queue.append(w)
    return grown


def _kl_refine(g: Graph, a: set[int], b: set[int], max_passes: int = 10, width: int = 40) -> list[int]:
    """Boundary swap passes; a swap is applied only if it strictly lowers the cut.

    Returns the cut size before refinement and after every pass.
    """
    side = {v: 0 for v in a}
    side.update({v: 1 for v in b})

    def dval(v):
        ext = inn = 0
        for w in g.neighbors(v):
            s = side.get(w)
            if s is None:
                continue
            if s == side[v]:
                inn += 1
            else:
                ext += 1
        return ext - inn

    cut = sum(1 for u, v in g.edges if u in side and v in side and side[u] != side[v])
    history = [cut]
    for _ in range(max_passes):
        d = {v: dval(v) for v in side}
        locked: set[int] = set()
        swapped = False
        while True:
            top_a = sorted((v for v in a if v not in locked), key=lambda v: (-d[v], v))[:width]
            top_b = sorted((v for v in b if v not in locked), key=lambda v: (-d[v], v))[:width]
            best = None
            for x in top_a:
                for y in top_b:
                    gain = d[x] + d[y] - (2 if g.has_edge(x, y) else 0)
                    if gain > 0 and (best is None or gain > best[0]):
                        best = (gain, x, y)
            if best is None:
                break
            gain, x, y = best
            a.remove(x)
            b.remove(y)
            a.add(y)
            b.add(x)
            side[x], side[y] = 1, 0
            locked.update((x, y))
            cut -= gain
            swapped = True
            for w in (x, y, *g.neighbors(x), *g.neighbors(y)):
                if w in side:
                    d[w] = dval(w)
        history.append(cut)
        if not swapped:
            break
    return history


def bisect_once(g: Graph, nodes: Sequence[int], rng) -> tuple[set[int], set[int], list[int]]:
    nodes = sorted(nodes)
    start = nodes[int(rng.integers(len(nodes)))]
    a = _bfs_half(g, nodes, start)
    b = set(nodes) - a
    history = _kl_refine(g, a, b)
    return a, b, history


def bisect_partition(g: Graph, part: Iterable[int], max_size: int, seed) -> Partition:
    """Recursively bisect ``part`` until every piece has at most ``max_size`` nodes."""
    if max_size < 2:
        raise DomainError("max_size must be at least 2")
    rng = np.random.default_rng(seed)
    done: list[set[int]] = []
    todo = [sorted(part)]
    while todo:
        nodes = todo.pop(0)
        if len(nodes) <= max_size:
            if nodes:
                done.append(set(nodes))
            continue
        a, b, _ = bisect_once(g, nodes, rng)
        todo.extend([sorted(a), sorted(b)])
    done.sort(key=min)
    return make_partition(g, done)
