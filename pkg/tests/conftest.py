import math
from pathlib import Path

import numpy as np
import pytest

from dcndp.graph import Graph, gnp_graph
from dcndp.pipeline import PipelineConfig, run_pipeline

CORPUS_SEED = 20240601


def random_corpus(count=200, max_n=12, seed=CORPUS_SEED):
    """Seeded random graphs with 3..max_n nodes and mixed densities."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(3, max_n + 1))
        p = float(rng.choice([0.15, 0.3, 0.45, 0.6]))
        out.append(gnp_graph(n, p, seed=int(rng.integers(1 << 31))))
    return out


def is_connected(g: Graph) -> bool:
    if g.n == 0:
        return False
    seen, stack = {0}, [0]
    while stack:
        v = stack.pop()
        for w in g.neighbors(v):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == g.n


def connected_corpus(count=30, max_n=8, seed=CORPUS_SEED + 1):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(2, max_n + 1))
        g = gnp_graph(n, float(rng.choice([0.3, 0.5, 0.7, 0.9])), seed=int(rng.integers(1 << 31)))
        if is_connected(g):
            out.append(g)
    return out


def budgets_for(n):
    """The two budget regimes: a single deletion and a fifth of the nodes."""
    return sorted({1, math.ceil(n / 5)})


@pytest.fixture(scope="session")
def corpus():
    return random_corpus()


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Two runs of the default n=5000 pipeline with the same config, in different directories."""
    runs = []
    for name in ("run_a", "run_b"):
        out = tmp_path_factory.mktemp(name)
        cfg = PipelineConfig(seed=7, n=5000, output_dir=str(out))
        import time

        t0 = time.perf_counter()
        res = run_pipeline(cfg)
        runs.append((res, time.perf_counter() - t0))
    return runs


@pytest.fixture(scope="session")
def small_pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return run_pipeline(PipelineConfig(seed=11, n=600, max_part_size=150, days=30, output_dir=str(out)))


def manifest_hashes(manifest):
    return {a["path"]: a["sha256"] for a in manifest["artifacts"]}


DATA = Path(__file__).parent


def phase_discipline_ok(trace, phase_of_node, n_phases):
    """Each vaccinated node belongs to the earliest phase still holding unvaccinated nodes."""
    remaining = [0] * n_phases
    for p in phase_of_node:
        remaining[p] += 1
    for day in trace.days:
        for v in day.vaccinated:
            earliest = next(i for i, c in enumerate(remaining) if c)
            if phase_of_node[v] != earliest:
                return False
            remaining[earliest] -= 1
    return True


def non_increasing(values):
    return all(b <= a for a, b in zip(values, values[1:]))
