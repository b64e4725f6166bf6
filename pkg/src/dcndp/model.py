"""Solver-agnostic MIP models for the 1-hop and 2-hop DCNDP, with a free MPS writer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import BinaryIO, Literal

from .errors import DomainError
from .graph import DELETION_COST, Graph, HopPairs

BINARY = "binary"
CONTINUOUS = "continuous"

VARIANT_1 = "1dcndp"
VARIANT_2_DISAGG = "2dcndp-disagg"
VARIANT_2_AGG = "2dcndp-agg"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # BINARY or CONTINUOUS
    obj: float
    upper: float | None = None  # None means +inf; lower bound is always 0


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: Literal["<=", "=", ">="]
    rhs: float
    family: str  # "edge", "disagg", "agg" or "budget"


@dataclass(frozen=True)
class MipModel:
    """A minimisation model: ``min c.x`` subject to linear rows, variables ``>= 0``."""

    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    metadata: dict = field(default_factory=dict)
    sense: str = "minimize"

    def __post_init__(self):
        names = [v.name for v in self.variables]
        declared = set(names)
        if len(declared) != len(names):
            raise DomainError("duplicate variable names")
        rows = set()
        for c in self.constraints:
            if c.name in rows:
                raise DomainError(f"duplicate constraint name {c.name!r}")
            rows.add(c.name)
            for var, _ in c.terms:
                if var not in declared:
                    raise DomainError(f"constraint {c.name!r} references undeclared {var!r}")
            if c.sense not in ("<=", "=", ">="):
                raise DomainError(f"bad sense {c.sense!r}")

    @property
    def variant(self) -> str:
        return self.metadata["variant"]

    @property
    def relaxed(self) -> bool:
        return self.metadata["relaxed"]

    def variable_index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}


@dataclass(frozen=True)
class ModelStats:
    num_vars: int
    num_binary: int
    num_constraints: int
    num_agg_constraints: int
    num_disagg_constraints: int


def x_name(u: int, v: int) -> str:
    if u > v:
        u, v = v, u
    return f"x_{u}_{v}"


def y_name(v: int) -> str:
    return f"y_{v}"


def _check_budget(g: Graph, budget: int):
    if budget < 0 or budget > g.n:
        raise DomainError(f"budget must lie in [0, n={g.n}], got {budget}")


def _y_variables(g: Graph, relax_y: bool) -> list[Variable]:
    kind = CONTINUOUS if relax_y else BINARY
    return [Variable(y_name(v), kind, 0, 1) for v in g.nodes()]


def _edge_rows(g: Graph) -> list[Constraint]:
    # 1 - y_u - y_v <= x_uv written as x_uv + y_u + y_v >= 1
    return [
        Constraint(f"e_{u}_{v}", ((x_name(u, v), 1), (y_name(u), 1), (y_name(v), 1)), ">=", 1, "edge")
        for u, v in g.edges
    ]


def _budget_row(g: Graph, budget: int) -> Constraint:
    return Constraint("budget", tuple((y_name(v), DELETION_COST) for v in g.nodes()), "<=", budget, "budget")


def build_1dcndp(g: Graph, budget: int, relax_y: bool = False) -> MipModel:
    """Edges whose endpoints both survive are charged through ``x_uv``."""
    _check_budget(g, budget)
    xs = [Variable(x_name(u, v), CONTINUOUS, 1) for u, v in g.edges]
    return MipModel(
        tuple(xs + _y_variables(g, relax_y)),
        tuple(_edge_rows(g) + [_budget_row(g, budget)]),
        {"variant": VARIANT_1, "relaxed": relax_y, "k": 1, "budget": budget, "n": g.n,
         "deletion_cost": DELETION_COST},
    )


def build_2dcndp(
    g: Graph,
    hp: HopPairs,
    budget: int,
    style: Literal["disagg", "agg"] = "agg",
    relax_y: bool = False,
    scaled: bool = True,
) -> MipModel:
    """2-hop model over E².

    ``style="disagg"`` emits one row per (distance-two pair, common neighbour).
    ``style="agg"`` emits the single averaged row per distance-two pair; with
    ``scaled`` it is multiplied through by the common-neighbour count so that
    all coefficients stay integral. In the aggregated integer model the
    distance-two ``x`` columns are binary; ``relax_y`` relaxes every column.
    """
    if hp.k != 2:
        raise DomainError(f"2-DCNDP needs k=2 hop pairs, got k={hp.k}")
    if style not in ("disagg", "agg"):
        raise DomainError(f"unknown constraint style {style!r}")
    _check_budget(g, budget)
    # The averaged row only forces x_uv to a positive fraction when some common
    # neighbour survives, so x must be integral there to count the pair fully.
    two_kind = BINARY if (style == "agg" and not relax_y) else CONTINUOUS
    xs = [
        Variable(x_name(u, v), two_kind, 1, 1) if (u, v) in hp.common else Variable(x_name(u, v), CONTINUOUS, 1)
        for u, v in hp.pairs
    ]
    rows: list[Constraint] = []
    for (u, v), common in sorted(hp.common.items()):
        x, yu, yv = x_name(u, v), y_name(u), y_name(v)
        mids = sorted(common)
        if style == "disagg":
            for i in mids:
                rows.append(Constraint(f"d_{u}_{v}_{i}", ((x, 1), (yu, 1), (yv, 1), (y_name(i), 1)),
                                       ">=", 1, "disagg"))
        elif scaled:
            c = len(mids)
            terms = ((x, c), (yu, c), (yv, c)) + tuple((y_name(i), 1) for i in mids)
            rows.append(Constraint(f"a_{u}_{v}", terms, ">=", c, "agg"))
        else:
            share = 1.0 / len(mids)
            terms = ((x, 1), (yu, 1), (yv, 1)) + tuple((y_name(i), share) for i in mids)
            rows.append(Constraint(f"a_{u}_{v}", terms, ">=", 1, "agg"))
    rows += _edge_rows(g)
    rows.append(_budget_row(g, budget))
    variant = VARIANT_2_AGG if style == "agg" else VARIANT_2_DISAGG
    return MipModel(
        tuple(xs + _y_variables(g, relax_y)),
        tuple(rows),
        {"variant": variant, "relaxed": relax_y, "k": 2, "budget": budget, "n": g.n,
         "deletion_cost": DELETION_COST, "scaled": scaled},
    )


def model_stats(model: MipModel) -> ModelStats:
    fams = [c.family for c in model.constraints]
    return ModelStats(
        num_vars=len(model.variables),
        num_binary=sum(v.kind == BINARY for v in model.variables),
        num_constraints=len(model.constraints),
        num_agg_constraints=fams.count("agg"),
        num_disagg_constraints=fams.count("disagg"),
    )


def _num(x) -> str:
    if float(x) == int(x):
        return str(int(x))
    return format(float(x), ".17g")


_ROW_TYPE = {"<=": "L", ">=": "G", "=": "E"}


def write_mps(model: MipModel, sink: BinaryIO) -> None:
    """Write free-format MPS; integer columns are wrapped in INTORG/INTEND markers."""
    columns: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for v in model.variables:
        if v.obj:
            columns[v.name].append(("OBJ", v.obj))
    for c in model.constraints:
        for var, coef in c.terms:
            if coef:
                columns[var].append((c.name, coef))

    out = [f"NAME {model.metadata.get('variant', 'model')}", "ROWS", " N OBJ"]
    out += [f" {_ROW_TYPE[c.sense]} {c.name}" for c in model.constraints]
    out.append("COLUMNS")
    in_int = False
    for v in model.variables:
        if (v.kind == BINARY) != in_int:
            out.append(" MARKER 'MARKER' 'INTEND'" if in_int else " MARKER 'MARKER' 'INTORG'")
            in_int = not in_int
        entries = columns[v.name]
        if not entries:
            # keep the column declared even if it appears nowhere
            entries = [("OBJ", 0)]
        for row, coef in entries:
            out.append(f" {v.name} {row} {_num(coef)}")
    if in_int:
        out.append(" MARKER 'MARKER' 'INTEND'")
    out.append("RHS")
    for c in model.constraints:
        if c.rhs:
            out.append(f" RHS {c.name} {_num(c.rhs)}")
    out.append("BOUNDS")
    for v in model.variables:
        if v.upper is not None:
            out.append(f" UP BND {v.name} {_num(v.upper)}")
    out.append("ENDATA")
    sink.write(("\n".join(out) + "\n").encode("utf-8"))
