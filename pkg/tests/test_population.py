import io
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcndp.errors import ConfigError, DomainError
from dcndp.graph import Graph, complete_graph, cycle_graph, gnp_graph, load_graph, write_edge_list
from dcndp.population import (RHAS, MixingConfig, NodeAttributes, bisect_once, bisect_partition,
                              crossing_pairs, generate_population, split_by_rha, write_attributes)

FULL_N = 507555


def serialise(g):
    e, a = io.StringIO(), io.StringIO()
    write_edge_list(g, e)
    write_attributes(g, a)
    return e.getvalue(), a.getvalue()


def components(g):
    seen, out = set(), []
    for s in g.nodes():
        if s in seen:
            continue
        comp, stack = {s}, [s]
        seen.add(s)
        while stack:
            v = stack.pop()
            for w in g.neighbors(v):
                if w not in seen:
                    seen.add(w)
                    comp.add(w)
                    stack.append(w)
        out.append(comp)
    return out


@pytest.fixture(scope="module")
def pop1000():
    return generate_population(5, 1000)


def test_deterministic(pop1000):
    assert serialise(pop1000) == serialise(generate_population(5, 1000))
    assert serialise(pop1000) != serialise(generate_population(6, 1000))


def test_attribute_invariants(pop1000):
    for rec in pop1000.attributes:
        assert rec.age >= 0 and rec.rha in RHAS
        if rec.school_id is not None:
            assert 4 <= rec.age <= 22
        assert rec.school_id is None or rec.workplace_id is None
        assert rec.household_id is not None


def test_default_shares():
    g = generate_population(2, 10000)
    attrs = g.attributes
    assert sum(a.is_healthcare_worker for a in attrs) == 400
    assert sum(a.is_urgent_care_patient for a in attrs) == 200
    assert sum(a.is_long_term_care for a in attrs) == 100


def test_no_community_edges_means_context_cliques():
    cfg = MixingConfig(community_degree=0.0)
    g = generate_population(3, 1500, mixing_config=cfg)
    for u, v in g.edges:
        a, b = g.attributes[u], g.attributes[v]
        assert (a.household_id == b.household_id
                or (a.workplace_id is not None and a.workplace_id == b.workplace_id)
                or (a.school_id is not None and a.school_id == b.school_id))


def test_households_only_is_disjoint_cliques():
    cfg = MixingConfig(community_degree=0.0, employment_rate=0.0, school_rate_child=0.0,
                       school_rate_young_adult=0.0)
    g = generate_population(3, 1500, mixing_config=cfg)
    for comp in components(g):
        k = len(comp)
        assert sum(g.degree(v) for v in comp) == k * (k - 1)
        assert k <= 6


def test_caps_respected():
    g = generate_population(4, 3000, mixing_config=MixingConfig(workplace_max=7, school_max=9))
    for key, cap in (("workplace_id", 7), ("school_id", 9)):
        sizes = {}
        for a in g.attributes:
            gid = getattr(a, key)
            if gid is not None:
                sizes[gid] = sizes.get(gid, 0) + 1
        assert sizes and max(sizes.values()) <= cap


@pytest.mark.parametrize("weights", [{"East": 0.5, "West": 0.4}, {"East": 1.2, "West": -0.2},
                                     {"North": 1.0}])
def test_invalid_weights(weights):
    with pytest.raises(ConfigError):
        generate_population(1, 10, weights)


def test_invalid_size():
    with pytest.raises(ConfigError):
        generate_population(1, 0)


def test_full_scale_density_from_desk_scale():
    g = generate_population(1, 20000)
    mean_degree = 2 * g.m / g.n
    full_density = 100 * mean_degree / (FULL_N - 1)
    assert 0.001 <= full_density <= 0.01


@pytest.mark.skipif(not os.environ.get("DCNDP_FULL_SCALE"), reason="set DCNDP_FULL_SCALE=1 for the full run")
def test_full_scale_smoke():
    g = generate_population(1, FULL_N)
    d = 100 * g.m / (g.n * (g.n - 1) / 2)
    assert 0.001 <= d <= 0.01


def test_attribute_csv_round_trip(pop1000):
    edges, attrs = serialise(pop1000)
    h = load_graph(io.StringIO(edges), io.StringIO(attrs))
    for v in h.nodes():
        assert h.attributes[v] == pop1000.attributes[pop1000.index(h.label(v))]


def test_node_attributes_validation():
    with pytest.raises(DomainError):
        NodeAttributes(30, "East", False, False, False, 1, school_id=3)
    with pytest.raises(DomainError):
        NodeAttributes(10, "North", False, False, False, 1)
    with pytest.raises(DomainError):
        NodeAttributes(-1, "East", False, False, False, 1)


# --- partitioning -------------------------------------------------------------


def attrs_for(rhas):
    return [NodeAttributes(40, r, False, False, False, i) for i, r in enumerate(rhas)]


def test_split_all_east():
    g = gnp_graph(20, 0.3, seed=1).with_attributes(attrs_for(["East"] * 20))
    p = split_by_rha(g)
    assert [len(x) for x in p.parts] == [20, 0, 0, 0] and p.crossing_edges == 0


def test_split_two_rhas():
    g = Graph(["a", "b"], [(0, 1)], attributes=attrs_for(["East", "West"]))
    assert split_by_rha(g).crossing_edges == 1


def test_split_generated(pop1000):
    p = split_by_rha(pop1000)
    assert sum(p.sizes()) == 1000
    assert p.crossing_edges == sum(1 for u, v in pop1000.edges if p.part_of[u] != p.part_of[v])


def test_split_needs_attributes():
    with pytest.raises(DomainError):
        split_by_rha(cycle_graph(4))
    g = Graph(["a"], [], attributes=[{"age": "3"}])
    with pytest.raises(DomainError):
        split_by_rha(g)


def test_bisect_two_cliques():
    k = complete_graph(10)
    g = Graph([str(i) for i in range(20)], list(k.edges) + [(u + 10, v + 10) for u, v in k.edges])
    p = bisect_partition(g, range(20), 10, seed=0)
    assert len(p.parts) == 2 and p.crossing_edges == 0


def test_bisect_cycle():
    p = bisect_partition(cycle_graph(12), range(12), 6, seed=3)
    assert p.sizes() == [6, 6] and p.crossing_edges == 2


def test_bisect_already_small():
    g = gnp_graph(2000, 0.002, seed=1)
    p = bisect_partition(g, range(2000), 2500, seed=0)
    assert len(p.parts) == 1 and p.crossing_edges == 0


def test_bisect_max_size_guard():
    with pytest.raises(DomainError):
        bisect_partition(cycle_graph(4), range(4), 1, seed=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(10, 120), st.floats(0.01, 0.3), st.integers(2, 40), st.integers(0, 1000))
def test_bisect_properties(n, p, max_size, seed):
    g = gnp_graph(n, p, seed=seed)
    part = bisect_partition(g, range(n), max_size, seed)
    assert all(len(x) <= max_size for x in part.parts)
    assert sum(part.sizes()) == n and set().union(*part.parts) == set(range(n))
    assert part.crossing_edges == sum(1 for u, v in g.edges if part.part_of[u] != part.part_of[v])
    assert part == bisect_partition(g, range(n), max_size, seed)


@pytest.mark.parametrize("seed", range(8))
def test_refinement_never_increases_cut(seed):
    g = gnp_graph(200, 0.03, seed=seed)
    _, _, history = bisect_once(g, list(range(200)), np.random.default_rng(seed))
    assert all(b <= a for a, b in zip(history, history[1:]))
    assert len(history) <= 11


def test_crossing_pairs_counts_two_hop():
    g = Graph(["a", "b", "c"], [(0, 1), (1, 2)], attributes=attrs_for(["East", "East", "West"]))
    p = split_by_rha(g)
    assert crossing_pairs(g, p, 1) == 1
    assert crossing_pairs(g, p, 2) == 2


def test_population_parts_density_band():
    # smoke check only: the experimental regime is reported, not asserted
    g = generate_population(9, 5000)
    p = bisect_partition(g, split_by_rha(g).parts[0], 500, seed=1)
    dens = []
    for part in p.parts:
        sub, _ = g.induced_subgraph(part)
        dens.append(100 * sub.m / (sub.n * (sub.n - 1) / 2))
    assert all(d > 0 for d in dens)
