"""Exact certificates for the dimension and facets of the 1-hop DCNDP polytope.

The polytope lives in R^(m+n): one ``x`` coordinate per edge (in ``g.edges``
order) followed by one ``y`` coordinate per node. Every certificate is a
family of integral points; we check that they lie in the polytope, that they
are tight for the inequality under study, and that their affine rank is as
large as the dimension argument needs. All arithmetic is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import DomainError
from .graph import Graph

FULL_DIM = "full-dim"
X_NONNEG = "x>=0"
Y_NONNEG = "y>=0"
Y_AT_MOST_ONE = "y<=1"
EDGE_ROW = "edge-row"

_REQUIRED_BUDGET = {FULL_DIM: 1, X_NONNEG: 2, Y_NONNEG: 1, Y_AT_MOST_ONE: 2, EDGE_ROW: 1}


@dataclass(frozen=True)
class Target:
    kind: str
    edge: tuple[int, int] | None = None
    vertex: int | None = None

    def describe(self, g: Graph) -> str:
        if self.kind == FULL_DIM:
            return FULL_DIM
        if self.edge is not None:
            a, b = (g.label(w) for w in self.edge)
            if self.kind == X_NONNEG:
                return f"x[{a},{b}] >= 0"
            return f"1 - y[{a}] - y[{b}] <= x[{a},{b}]"
        lab = g.label(self.vertex)
        return f"y[{lab}] >= 0" if self.kind == Y_NONNEG else f"y[{lab}] <= 1"


@dataclass(frozen=True)
class PointFamily:
    points: tuple[tuple[Fraction, ...], ...]
    target: Target
    required_budget: int
    anchor: int
    m: int
    n: int
    edge_position: int | None = None  # x coordinate of the studied edge, if any
    notes: tuple[str, ...] = field(default=())

    def x(self, p: int) -> tuple[Fraction, ...]:
        return self.points[p][: self.m]

    def y(self, p: int) -> tuple[Fraction, ...]:
        return self.points[p][self.m:]


@dataclass(frozen=True)
class CertificateReport:
    target: str
    required_budget: int
    membership_ok: bool | None
    tightness_ok: bool | None
    rank: int | None
    required_rank: int
    verdict: str  # "pass", "fail" or "condition unmet"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _cover_vertex(edge: tuple[int, int], avoid: Sequence[int]) -> int:
    """Smallest endpoint of ``edge`` outside ``avoid``; deleting it zeroes that edge's row."""
    for w in sorted(edge):
        if w not in avoid:
            return w
    raise DomainError(f"edge {edge} has no endpoint outside {avoid}")


def _normalise_edge(g: Graph, edge) -> tuple[int, int]:
    u, v = sorted(edge)
    if not (0 <= u < g.n and 0 <= v < g.n and g.has_edge(u, v)):
        raise DomainError(f"{edge} is not an edge of the graph")
    return u, v


def build_family(g: Graph, target: Target) -> PointFamily:
    """Instantiate the point recipe certifying ``target`` on ``g``."""
    if g.n == 0:
        raise DomainError("empty graph")
    edges = g.edges
    m, n = g.m, g.n
    eidx = {e: i for i, e in enumerate(edges)}
    pts: list[list[int]] = []
    notes: list[str] = []

    def point(zero_edges=(), ones=(), x_default=1):
        p = [x_default] * m + [0] * n
        for e in zero_edges:
            p[eidx[e]] = 0
        for v in ones:
            p[m + v] = 1
        return p

    kind = target.kind
    if kind == FULL_DIM:
        pts.append(point())
        pts += [point([f], [f[0]]) for f in edges]
        pts += [point((), [v]) for v in g.nodes()]
        anchor = 0
    elif kind == X_NONNEG:
        u, v = e = _normalise_edge(g, target.edge)
        rest_v = [r for r in g.nodes() if r not in e]
        rest_e = [f for f in edges if f != e]
        pts += [point([e], [v]), point([e], [u, v]), point([e], [u])]
        pts += [point([e], [u, r]) for r in rest_v]
        pts += [point([e, f], [u, _cover_vertex(f, e)]) for f in rest_e]
        anchor = 2
    elif kind in (Y_NONNEG, Y_AT_MOST_ONE):
        v = target.vertex
        if v is None or not 0 <= v < n:
            raise DomainError(f"unknown vertex {v!r}")
        fixed = [v] if kind == Y_AT_MOST_ONE else []
        covers = [_cover_vertex(f, (v,)) for f in edges]
        if len(set(covers)) < len(covers):
            notes.append("indicator vertices repeat across edge points; independence rests on the x block")
        pts += [point([f], fixed + [w]) for f, w in zip(edges, covers)]
        pts += [point((), fixed + [r]) for r in g.nodes() if r != v]
        pts.append(point((), fixed))
        anchor = len(pts) - 1
    elif kind == EDGE_ROW:
        u, v = e = _normalise_edge(g, target.edge)
        pts += [point(), point([e], [u]), point([e], [v])]
        pts += [point([f], [_cover_vertex(f, e)]) for f in edges if f != e]
        pts += [point((), [r]) for r in g.nodes() if r not in e]
        anchor = 0
    else:
        raise DomainError(f"unknown target kind {kind!r}")
    if kind in (X_NONNEG, EDGE_ROW):
        target = Target(kind, e)
    return PointFamily(
        tuple(tuple(Fraction(c) for c in p) for p in pts),
        target,
        _REQUIRED_BUDGET[kind],
        anchor,
        m,
        n,
        eidx.get(target.edge) if target.edge is not None else None,
        tuple(notes),
    )


def check_membership(g: Graph, budget, family: PointFamily) -> bool:
    """True iff every point satisfies the edge rows, the budget row and the box bounds."""
    m = g.m
    for p in family.points:
        if len(p) != m + g.n:
            return False
        x, y = p[:m], p[m:]
        if any(c < 0 for c in x) or any(c < 0 or c > 1 for c in y):
            return False
        if sum(y) > budget:
            return False
        for i, (u, v) in enumerate(g.edges):
            if 1 - y[u] - y[v] > x[i]:
                return False
    return True


def _slack(family: PointFamily, p: int) -> Fraction:
    t = family.target
    x, y = family.x(p), family.y(p)
    if t.kind == X_NONNEG:
        return x[family.edge_position]
    if t.kind == Y_NONNEG:
        return y[t.vertex]
    if t.kind == Y_AT_MOST_ONE:
        return 1 - y[t.vertex]
    if t.kind == EDGE_ROW:
        u, v = t.edge
        return x[family.edge_position] - (1 - y[u] - y[v])
    raise DomainError(f"no inequality to check for {t.kind!r}")


def check_tightness(family: PointFamily) -> bool:
    if family.target.kind == FULL_DIM:
        raise DomainError("a full-dimensionality family has no inequality to be tight for")
    return all(_slack(family, p) == 0 for p in range(len(family.points)))


def rational_rank(rows: Sequence[Sequence]) -> int:
    """Rank of a rational matrix by fraction-free elimination over the integers."""
    mat = []
    for row in rows:
        fr = [Fraction(c) for c in row]
        scale = math.lcm(*(c.denominator for c in fr)) if fr else 1
        mat.append([int(c * scale) for c in fr])
    rank = 0
    ncols = len(mat[0]) if mat else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(mat)) if mat[r][col] != 0), None)
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        prow = mat[rank]
        pv = prow[col]
        for r in range(rank + 1, len(mat)):
            f = mat[r][col]
            if f == 0:
                continue
            new = [pv * a - f * b for a, b in zip(mat[r], prow)]
            g = math.gcd(*new)
            mat[r] = [a // g for a in new] if g > 1 else new
        rank += 1
    return rank


def affine_rank(family: PointFamily, anchor: int | None = None) -> int:
    """Rank of the differences between each point and the anchor point."""
    if not family.points:
        raise DomainError("empty point family")
    a = family.anchor if anchor is None else anchor
    base = family.points[a]
    diffs = [[pi - bi for pi, bi in zip(p, base)] for i, p in enumerate(family.points) if i != a]
    if not diffs:
        return 0
    return rational_rank(diffs)


def _report(g: Graph, budget, target: Target) -> CertificateReport:
    required_budget = _REQUIRED_BUDGET[target.kind]
    required_rank = g.m + g.n - (0 if target.kind == FULL_DIM else 1)
    label = target.describe(g)
    if budget < required_budget:
        return CertificateReport(label, required_budget, None, None, None, required_rank, "condition unmet")
    fam = build_family(g, target)
    member = check_membership(g, budget, fam)
    tight = True if target.kind == FULL_DIM else check_tightness(fam)
    rank = affine_rank(fam)
    ok = member and tight and rank == required_rank
    return CertificateReport(label, required_budget, member, tight, rank, required_rank, "pass" if ok else "fail")


def verify_proposition(g: Graph, budget, proposition: int) -> list[CertificateReport]:
    """Run every certificate of one result.

    1: full dimension; 2: ``x_e >= 0`` per edge, ``y_v >= 0`` and ``y_v <= 1``
    per vertex; 3: the edge rows ``1 - y_u - y_v <= x_uv``.
    """
    if proposition == 1:
        targets = [Target(FULL_DIM)]
    elif proposition == 2:
        targets = [Target(X_NONNEG, e) for e in g.edges]
        targets += [Target(Y_NONNEG, vertex=v) for v in g.nodes()]
        targets += [Target(Y_AT_MOST_ONE, vertex=v) for v in g.nodes()]
    elif proposition == 3:
        targets = [Target(EDGE_ROW, e) for e in g.edges]
    else:
        raise DomainError(f"proposition must be 1, 2 or 3, got {proposition}")
    return [_report(g, budget, t) for t in targets]
