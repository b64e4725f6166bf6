"""Budgeted day-by-day vaccination rollouts and curve comparisons."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import ConfigError, DomainError, ParseError
from .graph import Graph, count_khop_residual, r0_from_degrees, residual_degrees
from .policy import Policy, node_records

TRACE_COLUMNS = ("day", "n_vaccinated_today", "cum_vaccinated", "one_hop", "two_hop", "r0")
METRICS = ("one_hop", "two_hop", "r0")


@dataclass(frozen=True)
class DayRecord:
    day: int
    vaccinated: tuple[int, ...]  # node ids; empty when read back from CSV
    n_vaccinated: int
    cum_vaccinated: int
    one_hop: int
    two_hop: int
    r0: float


@dataclass(frozen=True)
class RolloutTrace:
    policy: str
    seed: int | None
    daily_budget: int
    days: tuple[DayRecord, ...]

    def series(self, metric: str) -> list[float]:
        if metric not in METRICS:
            raise DomainError(f"unknown metric {metric!r}")
        return [getattr(d, metric) for d in self.days]

    @property
    def vaccinated(self) -> list[int]:
        return [v for d in self.days for v in d.vaccinated]


def _records(g: Graph) -> list[dict]:
    if g.attributes is None:
        return [{"node_id": g.label(v)} for v in g.nodes()]
    return node_records(g)


def _day(g: Graph, day: int, today: Sequence[int], deleted: set[int]) -> DayRecord:
    return DayRecord(
        day,
        tuple(today),
        len(today),
        len(deleted),
        count_khop_residual(g, deleted, 1),
        count_khop_residual(g, deleted, 2),
        r0_from_degrees(residual_degrees(g, deleted)),
    )


def simulate(
    g: Graph,
    policy: Policy,
    days: int = 100,
    budget_frac: float = 0.01,
    seed=0,
    efficacy: float = 1.0,
    records: Sequence[Mapping] | None = None,
) -> RolloutTrace:
    """Vaccinate ``ceil(budget_frac * n)`` nodes per day, phase by phase.

    Within a phase the order is a seeded uniform shuffle; when a phase runs
    out mid-day the rest of the day's doses go to the next phase. Vaccinated
    nodes leave the network. Day 0 records the untouched graph.
    """
    if not 0 < budget_frac <= 1:
        raise ConfigError(f"budget_frac must lie in (0, 1], got {budget_frac}")
    if efficacy != 1.0:
        raise ConfigError("only efficacy 1.0 is supported")
    if days < 0:
        raise ConfigError("days must be nonnegative")
    recs = _records(g) if records is None else records
    if len(recs) != g.n:
        raise DomainError("need one attribute record per node")
    phase = policy.assign(recs)
    rng = np.random.default_rng(seed)
    queue: list[int] = []
    for p in range(len(policy.phases)):
        members = np.array([v for v in g.nodes() if phase[v] == p], dtype=np.int64)
        queue.extend(int(v) for v in rng.permutation(members))
    budget = math.ceil(budget_frac * g.n)

    deleted: set[int] = set()
    out = [_day(g, 0, (), deleted)]
    pos = 0
    for d in range(1, days + 1):
        today = queue[pos:pos + budget]
        pos += len(today)
        deleted.update(today)
        out.append(_day(g, d, today, deleted))
    return RolloutTrace(policy.name, seed if isinstance(seed, int) else None, budget, tuple(out))


def restrict_trace(g: Graph, trace: RolloutTrace, nodes: Iterable[int], name: str | None = None) -> RolloutTrace:
    """Recompute a trace's metrics on the subgraph induced by ``nodes`` (outside edges dropped)."""
    sub, old = g.induced_subgraph(nodes)
    new_id = {v: i for i, v in enumerate(old)}
    deleted: set[int] = set()
    out = []
    for rec in trace.days:
        if rec.day and not rec.vaccinated and rec.n_vaccinated:
            raise DomainError("trace carries no vaccination sets (was it read from CSV?)")
        today = [new_id[v] for v in rec.vaccinated if v in new_id]
        deleted.update(today)
        out.append(_day(sub, rec.day, today, deleted))
    return RolloutTrace(name or trace.policy, trace.seed, trace.daily_budget, tuple(out))


# --- comparison ------------------------------------------------------------


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    area_shrink_percent: float
    days_with_improvement_percent: float
    daily_improvement_mean: float
    daily_improvement_std: float


def _trapezoid(values: Sequence[float]) -> float:
    return sum((values[i] + values[i + 1]) / 2 for i in range(len(values) - 1))


def compare(a: RolloutTrace, b: RolloutTrace, metric: str) -> MetricComparison:
    """Candidate ``a`` against baseline ``b``; positive numbers favour ``a``."""
    if len(a.days) != len(b.days):
        raise DomainError(f"traces differ in length: {len(a.days)} vs {len(b.days)}")
    sa, sb = a.series(metric), b.series(metric)
    area_b = _trapezoid(sb)
    area = 100.0 * (area_b - _trapezoid(sa)) / area_b if area_b else 0.0
    better = sum(1 for x, y in zip(sa, sb) if x < y)
    daily = [100.0 * (y - x) / y for x, y in zip(sa, sb) if y != 0]
    mean = float(np.mean(daily)) if daily else 0.0
    std = float(np.std(daily)) if daily else 0.0
    return MetricComparison(metric, area, 100.0 * better / len(sa), mean, std)


def compare_all(a: RolloutTrace, b: RolloutTrace) -> list[MetricComparison]:
    return [compare(a, b, m) for m in METRICS]


COMPARISON_COLUMNS = ("scope", "metric", "area_shrink_percent", "days_with_improvement_percent",
                      "daily_improvement_mean", "daily_improvement_std")


def write_comparison(rows: Iterable[tuple[str, MetricComparison]], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for scope, c in rows:
        w.writerow([scope, c.metric, repr(c.area_shrink_percent), repr(c.days_with_improvement_percent),
                    repr(c.daily_improvement_mean), repr(c.daily_improvement_std)])


# --- CSV -----------------------------------------------------------------------


def export_trace(t: RolloutTrace, sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for d in t.days:
        w.writerow([d.day, d.n_vaccinated, d.cum_vaccinated, d.one_hop, d.two_hop, repr(d.r0)])


def read_trace(source: TextIO, policy: str = "", seed: int | None = None) -> RolloutTrace:
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(header) != TRACE_COLUMNS:
        raise ParseError(f"expected header {','.join(TRACE_COLUMNS)}", 1)
    days = []
    for lineno, row in enumerate(reader, start=2):
        try:
            day, nv, cum, one, two = (int(x) for x in row[:5])
            days.append(DayRecord(day, (), nv, cum, one, two, float(row[5])))
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad trace row {row!r}", lineno) from exc
    budget = max((d.n_vaccinated for d in days), default=0)
    return RolloutTrace(policy, seed, budget, tuple(days))
