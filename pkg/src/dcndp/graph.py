"""Undirected contact graphs, k-hop pair structure and degree-based metrics."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, JoinError, ParseError, RejectedInputError

# Unit connection cost c_uv and unit deletion cost a_v; every objective in the
# toolkit counts pairs, so these are documented constants rather than inputs.
CONNECTION_COST = 1
DELETION_COST = 1

# Below this many surviving nodes the pure-Python 2-hop count beats building
# sparse matrices.
_SPARSE_THRESHOLD = 64


class Graph:
    """Immutable simple undirected graph on dense ids ``0..n-1``.

    External string labels are kept alongside so files and reports can use
    the original ids. ``attributes`` is an optional per-node record sequence
    (``NodeAttributes`` for generated populations, plain dicts otherwise).
    """

    __slots__ = ("_labels", "_index", "_adj", "_edges", "_weights", "_attributes", "_csr")

    def __init__(
        self,
        labels: Sequence[str],
        edges: Iterable[tuple[int, int]],
        weights: Mapping[tuple[int, int], float] | None = None,
        attributes: Sequence | None = None,
    ):
        labels = tuple(str(x) for x in labels)
        n = len(labels)
        index = {lab: i for i, lab in enumerate(labels)}
        if len(index) != n:
            raise RejectedInputError("duplicate node labels")
        adj: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise RejectedInputError(f"edge ({u}, {v}) references an unknown node")
            if u == v:
                raise RejectedInputError(f"self-loop on node {labels[u]!r}")
            adj[u].add(v)
            adj[v].add(u)
        self._labels = labels
        self._index = index
        self._adj = tuple(frozenset(a) for a in adj)
        self._edges = tuple((u, v) for u in range(n) for v in sorted(self._adj[u]) if u < v)
        w = {}
        for (u, v), val in (weights or {}).items():
            key = (u, v) if u < v else (v, u)
            if not (0 <= key[0] < n and key[1] in self._adj[key[0]]):
                continue
            if val < 0:
                raise RejectedInputError(f"negative edge weight on {key}")
            w[key] = float(val)
        self._weights = w
        if attributes is not None:
            attributes = tuple(attributes)
            if len(attributes) != n:
                raise JoinError(f"expected {n} attribute records, got {len(attributes)}")
        self._attributes = attributes
        self._csr = None

    # --- basic accessors -------------------------------------------------
    @property
    def n(self) -> int:
        return len(self._labels)

    @property
    def m(self) -> int:
        return len(self._edges)

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Edges as ``(u, v)`` with ``u < v``, sorted."""
        return self._edges

    @property
    def attributes(self):
        return self._attributes

    @property
    def weights(self) -> dict[tuple[int, int], float]:
        return dict(self._weights)

    def nodes(self) -> range:
        return range(self.n)

    def label(self, v: int) -> str:
        return self._labels[v]

    def index(self, label) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise DomainError(f"unknown node {label!r}") from None

    def neighbors(self, v: int) -> frozenset[int]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def degrees(self) -> np.ndarray:
        return np.fromiter((len(a) for a in self._adj), dtype=np.int64, count=self.n)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj[u]

    def weight(self, u: int, v: int) -> float | None:
        return self._weights.get((u, v) if u < v else (v, u))

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR adjacency matrix (cached)."""
        if self._csr is None:
            if self.m:
                e = np.asarray(self._edges, dtype=np.int64)
                rows = np.concatenate([e[:, 0], e[:, 1]])
                cols = np.concatenate([e[:, 1], e[:, 0]])
            else:
                rows = cols = np.zeros(0, dtype=np.int64)
            data = np.ones(len(rows), dtype=np.int32)
            self._csr = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        return self._csr

    def induced_subgraph(self, nodes: Iterable[int]) -> tuple["Graph", list[int]]:
        """Return ``(subgraph, old_ids)``; ``old_ids[i]`` is the parent id of new node ``i``."""
        keep = sorted(set(nodes))
        for v in keep:
            if not 0 <= v < self.n:
                raise DomainError(f"unknown node id {v}")
        new = {v: i for i, v in enumerate(keep)}
        edges = [(new[u], new[v]) for u, v in self._edges if u in new and v in new]
        weights = {
            (new[u], new[v]): w for (u, v), w in self._weights.items() if u in new and v in new
        }
        attrs = None if self._attributes is None else [self._attributes[v] for v in keep]
        return Graph([self._labels[v] for v in keep], edges, weights, attrs), keep

    def with_attributes(self, attributes: Sequence) -> "Graph":
        return Graph(self._labels, self._edges, self._weights, attributes)

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self._labels == other._labels and self._edges == other._edges

    def __hash__(self):
        return hash((self._labels, self._edges))


@dataclass(frozen=True)
class HopPairs:
    """Pairs within hop distance ``k``.

    For ``k == 2`` ``common`` maps every pair of E² \\ E to the full set of
    common neighbours of its endpoints.
    """

    k: int
    pairs: tuple[tuple[int, int], ...]
    common: Mapping[tuple[int, int], frozenset[int]] = field(default_factory=dict)

    @property
    def within_k(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.pairs)

    @property
    def distance_two(self) -> list[tuple[int, int]]:
        """Pairs at distance exactly two, sorted."""
        return sorted(self.common)

    def __len__(self):
        return len(self.pairs)


# --- construction helpers ------------------------------------------------


def from_edge_list(edges: Iterable[tuple], n: int | None = None) -> Graph:
    """Build a graph from labelled edges; labels are ordered by first appearance.

    When ``n`` is given the labels ``1..n`` are declared up front, which keeps
    isolated nodes and fixes the id order.
    """
    labels: dict[str, int] = {}
    if n is not None:
        for i in range(1, n + 1):
            labels[str(i)] = i - 1
    pairs = []
    for a, b in edges:
        for x in (a, b):
            labels.setdefault(str(x), len(labels))
        pairs.append((labels[str(a)], labels[str(b)]))
    return Graph(list(labels), pairs)


def grid_graph(rows: int, cols: int) -> Graph:
    """Grid with row-major labels ``1..rows*cols``."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph([str(i + 1) for i in range(rows * cols)], edges)


def path_graph(n: int) -> Graph:
    return Graph([str(i + 1) for i in range(n)], [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph([str(i + 1) for i in range(n)], [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph([str(i + 1) for i in range(n)], itertools.combinations(range(n), 2))


def star_graph(leaves: int) -> Graph:
    """K_{1,leaves}; the hub is node ``1`` (id 0)."""
    return Graph([str(i + 1) for i in range(leaves + 1)], [(0, i) for i in range(1, leaves + 1)])


def empty_graph(n: int) -> Graph:
    return Graph([str(i + 1) for i in range(n)], [])


def petersen_graph() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph([str(i + 1) for i in range(10)], outer + spokes + inner)


def gnp_graph(n: int, p: float, seed) -> Graph:
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    keep = rng.random(len(pairs)) < p
    return Graph([str(i + 1) for i in range(n)], [e for e, k in zip(pairs, keep) if k])


# --- file I/O ------------------------------------------------------------


def _split_line(line: str) -> list[str]:
    if "\t" in line:
        parts = line.split("\t")
    elif "," in line:
        parts = line.split(",")
    else:
        parts = line.split()
    return [p.strip() for p in parts]


def _lines(source) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def load_graph(edge_list_source: TextIO | Iterable[str], attr_source: TextIO | None = None) -> Graph:
    """Parse an edge list (and optionally a node attribute CSV) into a Graph.

    Each non-comment line is ``u v [weight]`` separated by tab, comma or
    whitespace. A line holding a single id declares a node without edges.
    Duplicate edges collapse; the first weight seen wins.
    """
    labels: dict[str, int] = {}
    edges: dict[tuple[int, int], float | None] = {}
    for lineno, raw in enumerate(_lines(edge_list_source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = _split_line(line)
        if any(p == "" for p in parts) or len(parts) > 3:
            raise ParseError(f"malformed edge line {raw.rstrip()!r}", lineno)
        if len(parts) == 1:
            labels.setdefault(parts[0], len(labels))
            continue
        a, b = parts[0], parts[1]
        weight = None
        if len(parts) == 3:
            try:
                weight = float(parts[2])
            except ValueError:
                raise ParseError(f"non-numeric weight {parts[2]!r}", lineno) from None
            if weight < 0:
                raise ParseError(f"negative weight {weight}", lineno)
        if a == b:
            raise RejectedInputError(f"line {lineno}: self-loop on node {a!r}")
        u = labels.setdefault(a, len(labels))
        v = labels.setdefault(b, len(labels))
        key = (u, v) if u < v else (v, u)
        if key not in edges:
            edges[key] = weight
    weights = {e: w for e, w in edges.items() if w is not None}
    g = Graph(list(labels), edges, weights)
    if attr_source is None:
        return g
    return g.with_attributes(_read_attributes(g, attr_source))


def _read_attributes(g: Graph, attr_source) -> list:
    from .population import NodeAttributes

    reader = csv.DictReader(_lines(attr_source))
    if not reader.fieldnames or reader.fieldnames[0] != "node_id":
        raise ParseError("attribute file must start with a 'node_id' column", 1)
    typed = set(NodeAttributes.csv_fields()) <= set(reader.fieldnames)
    records: list = [None] * g.n
    for lineno, row in enumerate(reader, start=2):
        node = row["node_id"]
        if node not in g._index:
            raise JoinError(f"line {lineno}: attribute row for unknown node {node!r}")
        rec = {k: v for k, v in row.items() if k != "node_id"}
        records[g._index[node]] = NodeAttributes.from_row(rec) if typed else rec
    return records


def write_edge_list(g: Graph, sink: TextIO) -> None:
    """Write tab-separated edges; isolated nodes are emitted as single-id lines."""
    touched = set()
    for u, v in g.edges:
        w = g.weight(u, v)
        if w is None:
            sink.write(f"{g.label(u)}\t{g.label(v)}\n")
        else:
            sink.write(f"{g.label(u)}\t{g.label(v)}\t{w!r}\n")
        touched.add(u)
        touched.add(v)
    for v in g.nodes():
        if v not in touched:
            sink.write(f"{g.label(v)}\n")


# --- k-hop structure -----------------------------------------------------


def edge_squared(g: Graph) -> HopPairs:
    """E² with the common-neighbour set of every pair at distance exactly two."""
    common: dict[tuple[int, int], set[int]] = {}
    for w in g.nodes():
        nbrs = sorted(g.neighbors(w))
        for i, u in enumerate(nbrs):
            nu = g.neighbors(u)
            for v in nbrs[i + 1:]:
                if v not in nu:
                    common.setdefault((u, v), set()).add(w)
    pairs = sorted(set(g.edges) | set(common))
    return HopPairs(2, tuple(pairs), {p: frozenset(c) for p, c in sorted(common.items())})


def hop_pairs(g: Graph, k: int) -> HopPairs:
    if k == 1:
        return HopPairs(1, g.edges, {})
    if k == 2:
        return edge_squared(g)
    raise DomainError(f"k must be 1 or 2, got {k}")


def _alive_mask(g: Graph, deleted) -> np.ndarray:
    alive = np.ones(g.n, dtype=bool)
    for v in deleted:
        if not (isinstance(v, (int, np.integer)) and 0 <= v < g.n):
            raise DomainError(f"deleted node {v!r} is not a node id of the graph")
        alive[v] = False
    return alive


def _count_python(g: Graph, alive: np.ndarray, k: int) -> int:
    if k == 1:
        return sum(1 for u, v in g.edges if alive[u] and alive[v])
    total = 0
    for u in g.nodes():
        if not alive[u]:
            continue
        reach = set()
        for w in g.neighbors(u):
            if not alive[w]:
                continue
            reach.add(w)
            for v in g.neighbors(w):
                if alive[v]:
                    reach.add(v)
        reach.discard(u)
        total += len(reach)
    return total // 2


def _count_sparse(g: Graph, alive: np.ndarray, k: int) -> int:
    idx = np.flatnonzero(alive)
    a = g.adjacency()[idx][:, idx]
    if k == 1:
        return int(a.nnz // 2)
    a = a.astype(np.int64)
    reach = (a + a @ a).tocsr()
    reach.setdiag(0)
    reach.eliminate_zeros()
    return int(reach.nnz // 2)


def count_khop_residual(g: Graph, deleted: Iterable[int] = (), k: int = 1) -> int:
    """Number of node pairs within ``k`` hops in ``G[V - deleted]``."""
    if k not in (1, 2):
        raise DomainError(f"k must be 1 or 2, got {k}")
    alive = _alive_mask(g, deleted)
    if int(alive.sum()) <= _SPARSE_THRESHOLD:
        return _count_python(g, alive, k)
    return _count_sparse(g, alive, k)


# --- metrics -------------------------------------------------------------


def density(g_or_n, m: int | None = None) -> float:
    """Edge density in percent: ``100 m / (n(n-1)/2)``.

    Accepts either a Graph or explicit ``(n, m)`` counts.
    """
    n, m = (g_or_n.n, g_or_n.m) if isinstance(g_or_n, Graph) else (int(g_or_n), int(m))
    if n < 2:
        raise DomainError("density needs at least two nodes")
    return float(_density_exact(n, m))


def _density_exact(n: int, m: int) -> Fraction:
    return Fraction(200 * m, n * (n - 1))


def density_rounded(n: int, m: int, places: int = 2) -> Decimal:
    """Density percent rounded half-up on the exact rational value."""
    if n < 2:
        raise DomainError("density needs at least two nodes")
    d = _density_exact(n, m)
    return (Decimal(d.numerator) / Decimal(d.denominator)).quantize(
        Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP
    )


def degree_stats(g: Graph | Sequence[int]):
    """Exact ``(<d>, <d^2>, {d: p_d})`` over all nodes, degree-zero nodes included."""
    degs = list(g.degrees()) if isinstance(g, Graph) else list(g)
    n = len(degs)
    if n == 0:
        raise DomainError("degree statistics of an empty graph are undefined")
    hist: dict[int, int] = {}
    for d in degs:
        hist[int(d)] = hist.get(int(d), 0) + 1
    mean = Fraction(sum(int(d) for d in degs), n)
    mean_sq = Fraction(sum(int(d) * int(d) for d in degs), n)
    return mean, mean_sq, {d: Fraction(c, n) for d, c in sorted(hist.items())}


def r0_from_degrees(degrees: Sequence[int] | np.ndarray, transmissibility: float = 1.0) -> float:
    degs = np.asarray(degrees, dtype=np.int64)
    s1 = int(degs.sum())
    if s1 == 0:
        return 0.0
    s2 = int((degs * degs).sum())
    return float(transmissibility * (Fraction(s2, s1) - 1))


def r0(g: Graph, transmissibility: float = 1.0) -> float:
    """Degree-based reproduction number ``T (<d^2>/<d> - 1)``; 0 when no node has an edge."""
    if transmissibility < 0:
        raise DomainError("transmissibility must be nonnegative")
    return r0_from_degrees(g.degrees(), transmissibility)


def residual_degrees(g: Graph, deleted: Iterable[int]) -> np.ndarray:
    """Degrees of surviving nodes after removing ``deleted`` (isolated survivors keep degree 0)."""
    alive = _alive_mask(g, deleted)
    idx = np.flatnonzero(alive)
    a = g.adjacency()[idx][:, idx]
    return np.asarray(a.sum(axis=1)).ravel().astype(np.int64)


def find_r0_witness(max_nodes: int = 8):
    """Smallest graph (by node count, then edge bitmask) where deleting one node raises r0.

    Returns ``(graph, node)``; the deleted node's neighbours stay in the
    residual graph even when left isolated. Returns None if nothing is found.
    """
    for n in range(2, max_nodes + 1):
        pairs = list(itertools.combinations(range(n), 2))
        for mask in range(1, 1 << len(pairs)):
            edges = [p for i, p in enumerate(pairs) if mask >> i & 1]
            edge_set = set(edges)
            degs = [0] * n
            for u, v in edges:
                degs[u] += 1
                degs[v] += 1
            if 0 in degs:
                continue
            base = r0_from_degrees(degs)
            for x in range(n):
                rest = [degs[w] - (1 if (min(w, x), max(w, x)) in edge_set else 0)
                        for w in range(n) if w != x]
                if r0_from_degrees(rest) > base:
                    return Graph([str(i + 1) for i in range(n)], edges), x
    return None
