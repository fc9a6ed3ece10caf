import json

import numpy as np
import pytest

from cpgnn.hetgraph import NodeId, from_edges, primary_neighbors
from cpgnn.sampler import (
    ContextSampleSet,
    SamplerConfig,
    cached_sample_context_set,
    context_neighbors_exact,
    sample_context_set,
)

from conftest import random_hetgraph


def A(i):
    return NodeId(0, i)


def test_exact_one_hop():
    g = from_edges(["A", "P"], [2, 1], 0, {("w", 0, 1): [(0, 0), (1, 0)]})
    assert context_neighbors_exact(g, A(0), 1) == {A(1)}
    assert context_neighbors_exact(g, A(0), 0) == set()


def test_exact_shared_term(shared_term_graph):
    assert context_neighbors_exact(shared_term_graph, A(0), 3) == {A(1)}
    assert context_neighbors_exact(shared_term_graph, A(0), 1) == set()
    assert context_neighbors_exact(shared_term_graph, A(0), 2) == set()


def test_exact_k0_is_primary_neighbors():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = random_hetgraph(rng)
        for v in range(g.num_primary):
            assert context_neighbors_exact(g, A(v), 0) == primary_neighbors(g, A(v))


def test_exact_paths_are_simple():
    # a0 - x0 - a1 with x0 - x1 - x0 impossible: a0 reaches a1 only at k=1
    g = from_edges(["A", "X"], [2, 2], 0, {("ax", 0, 1): [(0, 0), (1, 0)], ("xx", 1, 1): [(0, 1)]})
    assert context_neighbors_exact(g, A(0), 1) == {A(1)}
    assert context_neighbors_exact(g, A(0), 3) == set()


def test_exact_rejects_bad_input(shared_term_graph):
    with pytest.raises(ValueError, match="primary"):
        context_neighbors_exact(shared_term_graph, NodeId(1, 0), 1)
    with pytest.raises(ValueError, match="force"):
        context_neighbors_exact(shared_term_graph, A(0), 7)
    assert context_neighbors_exact(shared_term_graph, A(0), 7, force=True) == set()


def test_sample_shared_term(shared_term_graph):
    s = sample_context_set(shared_term_graph, SamplerConfig(max_length=3, positives=20, walks=200, seed=1))
    assert s.positives(0, 3) == [1]
    assert s.positives(0, 1) == []
    assert s.negatives(0, 3) == []  # only other primary node is already a positive


def test_sample_clique_k0():
    n = 6
    g = from_edges(["P", "X"], [n, 1], 0,
                   {("pp", 0, 0): [(i, j) for i in range(n) for j in range(i + 1, n)],
                    ("px", 0, 1): []})
    s = sample_context_set(g, SamplerConfig(max_length=0, positives=3, negatives=2, walks=50, seed=0))
    for v in range(n):
        pos = set(s.positives(v, 0))
        assert len(pos) == 3
        assert pos <= {u.index for u in primary_neighbors(g, A(v))}


def test_no_negatives():
    g = random_hetgraph(np.random.default_rng(2))
    s = sample_context_set(g, SamplerConfig(max_length=2, negatives=0, seed=4))
    assert all(len(a) == 0 for a in s.neg_node)


@pytest.mark.parametrize("seed", range(10))
def test_soundness_and_exclusivity(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_hetgraph(rng)
    cfg = SamplerConfig(max_length=3, positives=5, negatives=3, walks=40, seed=seed)
    s = sample_context_set(g, cfg)
    for k in range(4):
        for v in range(g.num_primary):
            exact = {u.index for u in context_neighbors_exact(g, A(v), k)}
            pos = s.positives(v, k)
            assert set(pos) <= exact
            assert len(pos) == len(set(pos)) <= cfg.positives
            neg = s.negatives(v, k)
            assert len(neg) == cfg.negatives * len(pos) or not pos or len(neg) == 0
            assert v not in neg and not set(neg) & set(pos)


def test_determinism_and_draws():
    g = random_hetgraph(np.random.default_rng(9))
    cfg = SamplerConfig(max_length=2, seed=11)
    a, b = sample_context_set(g, cfg), sample_context_set(g, cfg)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    c = sample_context_set(g, cfg, draw=1)
    assert isinstance(c, ContextSampleSet)


def coverage_graph(rng):
    """Two auxiliary types, every primary node attached to a couple of auxiliaries."""
    n_p, n_a, n_b = 8, 4, 3
    pa = [(i, int(j)) for i in range(n_p) for j in rng.choice(n_a, size=2, replace=False)]
    ab = [(i, int(j)) for i in range(n_a) for j in rng.choice(n_b, size=1)]
    return from_edges(["P", "A", "B"], [n_p, n_a, n_b], 0, {("pa", 0, 1): pa, ("ab", 1, 2): ab})


def test_coverage_statistical():
    """With enough walks and few neighbors, the sampled set equals the exact set w.p. >= 0.99."""
    graph_rng = np.random.default_rng(2024)
    graphs = [coverage_graph(graph_rng) for _ in range(5)]
    hits = total = 0
    for seed in range(100):
        g = graphs[seed % len(graphs)]
        exact = {(v, k): {u.index for u in context_neighbors_exact(g, A(v), k)}
                 for v in range(g.num_primary) for k in range(4)}
        size = max(len(e) for e in exact.values())
        cfg = SamplerConfig(max_length=3, positives=max(size, 1), walks=max(50 * size, 50), seed=seed)
        s = sample_context_set(g, cfg)
        for (v, k), e in exact.items():
            total += 1
            hits += set(s.positives(v, k)) == e
    assert hits / total >= 0.99


def test_cache_round_trip(tmp_path):
    g = random_hetgraph(np.random.default_rng(4))
    cfg = SamplerConfig(max_length=2, seed=3)
    a = cached_sample_context_set(g, cfg, tmp_path)
    b = cached_sample_context_set(g, cfg, tmp_path)
    assert len(list(tmp_path.iterdir())) == 1
    assert a.to_json() == b.to_json() == sample_context_set(g, cfg).to_json()


@pytest.mark.parametrize("kwargs", [dict(max_length=-1), dict(positives=0), dict(negatives=-1),
                                    dict(positives=20, walks=10)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SamplerConfig(**kwargs)
