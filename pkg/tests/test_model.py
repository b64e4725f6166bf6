import io
from fractions import Fraction

import numpy as np
import pytest

from dcndp.errors import DomainError
from dcndp.graph import Graph, count_khop_residual, edge_squared, empty_graph, gnp_graph, grid_graph, hop_pairs, path_graph
from dcndp.model import (BINARY, build_1dcndp, build_2dcndp, model_stats, write_mps, x_name, y_name)
from dcndp.solvers import solve_model


def mps_text(model):
    buf = io.BytesIO()
    write_mps(model, buf)
    return buf.getvalue().decode()


def row(model, name):
    return next(c for c in model.constraints if c.name == name)


def integer_point(g, deleted, k):
    """x from residual reachability, y from the deletion set."""
    alive = [v not in deleted for v in g.nodes()]
    pairs = hop_pairs(g, k)
    point = {y_name(v): int(v in deleted) for v in g.nodes()}
    for u, v in pairs.pairs:
        joined = alive[u] and alive[v] and (
            g.has_edge(u, v) or any(alive[i] for i in pairs.common.get((u, v), ())))
        point[x_name(u, v)] = int(joined)
    return point


def satisfied(c, point):
    lhs = sum(Fraction(coef) * point[var] for var, coef in c.terms)
    return {"<=": lhs <= c.rhs, ">=": lhs >= c.rhs, "=": lhs == c.rhs}[c.sense]


def test_grid_1dcndp_counts():
    m = build_1dcndp(grid_graph(3, 3), 1)
    s = model_stats(m)
    assert (s.num_vars, s.num_constraints, s.num_binary) == (21, 13, 9)
    assert all(v.obj == (1 if v.name.startswith("x") else 0) for v in m.variables)


def test_1dcndp_small_optima():
    single = Graph(["a", "b"], [(0, 1)])
    assert solve_model(build_1dcndp(single, 0)).objective == pytest.approx(1)
    assert solve_model(build_1dcndp(path_graph(3), 1)).objective == pytest.approx(0)


def test_budget_guard():
    with pytest.raises(DomainError):
        build_1dcndp(path_graph(3), 4)
    g = path_graph(3)
    with pytest.raises(DomainError):
        build_2dcndp(g, hop_pairs(g, 1), 1)


def test_p3_agg_equals_disagg_row():
    g = path_graph(3)
    hp = edge_squared(g)
    agg = row(build_2dcndp(g, hp, 1, "agg"), "a_0_2")
    dis = row(build_2dcndp(g, hp, 1, "disagg"), "d_0_2_1")
    assert sorted(agg.terms) == sorted(dis.terms) and agg.rhs == dis.rhs == 1


def test_c4_agg_row():
    g = Graph(["1", "2", "3", "4"], [(0, 1), (1, 2), (2, 3), (0, 3)])
    hp = edge_squared(g)
    scaled = row(build_2dcndp(g, hp, 1, "agg"), "a_0_2")
    assert dict(scaled.terms) == {"x_0_2": 2, "y_0": 2, "y_2": 2, "y_1": 1, "y_3": 1}
    assert scaled.rhs == 2 and scaled.sense == ">="
    plain = row(build_2dcndp(g, hp, 1, "agg", scaled=False), "a_0_2")
    assert dict(plain.terms) == {"x_0_2": 1, "y_0": 1, "y_2": 1, "y_1": 0.5, "y_3": 0.5}


def test_grid_neighbourhood_row_counts():
    g = grid_graph(3, 3)
    hp = edge_squared(g)
    agg = model_stats(build_2dcndp(g, hp, 1, "agg"))
    dis = model_stats(build_2dcndp(g, hp, 1, "disagg"))
    assert agg.num_agg_constraints == 14
    assert dis.num_disagg_constraints == sum(len(c) for c in hp.common.values()) == 22
    assert dis.num_disagg_constraints >= agg.num_agg_constraints


def test_binary_counts():
    g = grid_graph(3, 3)
    hp = edge_squared(g)
    assert model_stats(build_1dcndp(g, 1)).num_binary == g.n
    assert model_stats(build_2dcndp(g, hp, 1, "disagg")).num_binary == g.n
    # distance-two x columns are integral in the aggregated model
    assert model_stats(build_2dcndp(g, hp, 1, "agg")).num_binary == g.n + len(hp.common)
    for style in ("agg", "disagg"):
        assert model_stats(build_2dcndp(g, hp, 1, style, relax_y=True)).num_binary == 0


@pytest.mark.parametrize("seed", range(15))
def test_constraint_count_reduction(seed):
    g = gnp_graph(10, 0.4, seed=seed)
    hp = edge_squared(g)
    agg = model_stats(build_2dcndp(g, hp, 2, "agg")).num_constraints
    dis = model_stats(build_2dcndp(g, hp, 2, "disagg")).num_constraints
    assert agg - dis == sum(1 - len(c) for c in hp.common.values()) <= 0


@pytest.mark.parametrize("seed", range(20))
def test_integer_points_feasible(seed):
    rng = np.random.default_rng(seed)
    g = gnp_graph(int(rng.integers(3, 11)), 0.4, seed=seed)
    b = int(rng.integers(0, g.n + 1))
    deleted = set(rng.choice(g.n, size=int(rng.integers(0, b + 1)), replace=False).tolist())
    hp = edge_squared(g)
    for model, k in ((build_1dcndp(g, b, relax_y=True), 1), (build_2dcndp(g, hp, b, "agg"), 2),
                     (build_2dcndp(g, hp, b, "disagg"), 2)):
        point = integer_point(g, deleted, k)
        assert all(satisfied(c, point) for c in model.constraints)
        obj = sum(v.obj * point[v.name] for v in model.variables)
        assert obj == count_khop_residual(g, deleted, k)


def test_mps_layout():
    text = mps_text(build_1dcndp(path_graph(3), 1))
    heads = [ln for ln in text.splitlines() if not ln.startswith(" ")]
    assert heads == ["NAME 1dcndp", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"]
    assert "MARKER 'MARKER' 'INTORG'" in text and "MARKER 'MARKER' 'INTEND'" in text
    assert text == mps_text(build_1dcndp(path_graph(3), 1))


def test_mps_empty_graph_and_relaxed():
    text = mps_text(build_1dcndp(empty_graph(3), 1))
    rows = text.split("ROWS\n")[1].split("COLUMNS")[0].split("\n")
    assert [r for r in rows if r] == [" N OBJ", " L budget"]
    g = grid_graph(3, 3)
    assert "MARKER" not in mps_text(build_2dcndp(g, edge_squared(g), 1, "agg", relax_y=True))


def test_mps_round_trip_highs(tmp_path):
    highspy = pytest.importorskip("highspy")
    path = tmp_path / "p3.mps"
    path.write_text(mps_text(build_1dcndp(path_graph(3), 1)))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(0)


def test_mps_matches_model_grid_k2(tmp_path):
    highspy = pytest.importorskip("highspy")
    g = grid_graph(3, 3)
    for style in ("agg", "disagg"):
        model = build_2dcndp(g, edge_squared(g), 1, style)
        path = tmp_path / f"{style}.mps"
        path.write_text(mps_text(model))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        assert h.readModel(str(path)) == highspy.HighsStatus.kOk
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(16)
        assert solve_model(model).objective == pytest.approx(16)


def test_model_validation():
    from dcndp.model import Constraint, MipModel, Variable

    with pytest.raises(DomainError):
        MipModel((Variable("a", BINARY, 0),), (Constraint("r", (("b", 1),), ">=", 1, "edge"),))
    with pytest.raises(DomainError):
        MipModel((Variable("a", BINARY, 0), Variable("a", BINARY, 0)), ())
