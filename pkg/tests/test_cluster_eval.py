import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cpgnn.cluster_eval import ari, contingency, evaluate, f1_matched, kmeans, nmi, purity

METRICS = {"nmi": nmi, "ari": ari, "purity": purity, "f1": f1_matched}
ORACLES = {"nmi": oracles.nmi, "ari": oracles.ari, "purity": oracles.purity, "f1": oracles.f1_matched}


# -- hand fixtures ------------------------------------------------------------

@pytest.mark.parametrize("a,b,expected", [
    ([0, 1, 1, 2], [0, 1, 1, 2], 1.0),
    ([0, 0, 1, 1], [1, 1, 0, 0], 1.0),
    ([0, 0, 1, 1], [0, 1, 0, 1], 0.0),
])
def test_nmi_examples(a, b, expected):
    assert abs(nmi(a, b) - expected) <= 1e-9


@pytest.mark.parametrize("a,b,expected", [
    ([0, 1, 1, 2], [5, 3, 3, 9], 1.0),
    ([0, 0, 1, 1], [0, 1, 0, 1], -0.5),
    ([4], [7], 1.0),
])
def test_ari_examples(a, b, expected):
    assert abs(ari(a, b) - expected) <= 1e-9


def test_purity_examples():
    assert purity([0, 1, 2], [0, 1, 2]) == 1.0
    assert abs(purity([0, 0, 1, 1], [0, 1, 1, 1]) - 0.75) <= 1e-9
    assert abs(purity([0] * 6, [0, 0, 1, 1, 2, 2]) - 1 / 3) <= 1e-9


def test_f1_examples():
    assert f1_matched([2, 2, 0, 1], [0, 0, 1, 2]) == 1.0
    assert abs(f1_matched([0, 0, 1, 1], [0, 1, 1, 1]) - 0.75) <= 1e-9
    assert f1_matched([3, 3, 3], [1, 1, 1]) == 1.0


def test_constant_vs_varied():
    assert nmi([0, 0, 0], [0, 1, 2]) == 0.0
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0
    assert ari([0, 0, 0], [0, 1, 2]) == 0.0


def test_length_mismatch_and_empty():
    for f in METRICS.values():
        with pytest.raises(ValueError):
            f([0, 1], [0])
        with pytest.raises(ValueError):
            f([], [])


def test_contingency_counts():
    assert contingency(["x", "x", "y"], [1, 2, 2]).tolist() == [[1, 1], [0, 1]]


def test_evaluate_keys():
    assert set(evaluate([0, 1], [0, 1])) == {"f1", "nmi", "ari", "purity"}


# -- oracle agreement and properties --------------------------------------------

def random_pair(rng):
    n = int(rng.integers(1, 30))
    return (rng.integers(0, int(rng.integers(1, 5)), size=n).tolist(),
            rng.integers(0, int(rng.integers(1, 5)), size=n).tolist())


def oracle_mismatches(n_pairs, seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        a, b = random_pair(rng)
        for name, f in METRICS.items():
            worst = max(worst, abs(f(a, b) - ORACLES[name](a, b)))
    return worst


def test_oracle_agreement():
    assert oracle_mismatches(1000, seed=0) <= 1e-9


labelings = st.integers(1, 25).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 3), min_size=n, max_size=n),
                        st.lists(st.integers(0, 3), min_size=n, max_size=n)))


@settings(max_examples=100, deadline=None)
@given(labelings, st.permutations([0, 1, 2, 3]), st.permutations([0, 1, 2, 3]))
def test_relabeling_invariance_and_symmetry(pair, pa, pb):
    a, b = pair
    ra, rb = [pa[x] + 10 for x in a], [pb[x] for x in b]
    for f in METRICS.values():
        assert abs(f(a, b) - f(ra, rb)) <= 1e-12
    assert abs(nmi(a, b) - nmi(b, a)) <= 1e-12
    assert abs(ari(a, b) - ari(b, a)) <= 1e-12
    assert 0.0 <= nmi(a, b) <= 1.0 and -1.0 <= ari(a, b) <= 1.0
    assert 0.0 < purity(a, b) <= 1.0 and 0.0 <= f1_matched(a, b) <= 1.0


def test_purity_and_f1_not_symmetric():
    a, b = [0, 0, 0, 0], [0, 0, 1, 1]
    assert purity(a, b) == 0.5 and purity(b, a) == 1.0
    # three clusters against two classes: one cluster stays unmatched
    a, b = [0, 1, 2, 2], [0, 0, 1, 1]
    assert abs(f1_matched(a, b) - 6 / 7) <= 1e-12
    assert abs(f1_matched(b, a) - 0.75) <= 1e-12


def test_f1_equals_accuracy_with_equal_counts():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = rng.integers(0, 3, size=12), rng.integers(0, 3, size=12)
        if len(set(a)) == len(set(b)):
            t = contingency(a, b)
            best = max(t[0, p[0]] + t[1, p[1]] + (t[2, p[2]] if len(t) > 2 else 0)
                       for p in itertools.permutations(range(len(t))))
            assert abs(f1_matched(a, b) - best / 12) <= 1e-12


# -- k-means ------------------------------------------------------------------

def test_kmeans_two_points():
    c = kmeans(np.array([[0.0, 0.0], [1.0, 1.0]]), 2, seed=0)
    assert sorted(c.assignments.tolist()) == [0, 1]
    assert c.inertia == 0.0


def test_kmeans_blobs():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    truth = np.repeat(np.arange(3), 30)
    z = centers[truth] + rng.normal(scale=0.05, size=(90, 2))
    c = kmeans(z, 3, seed=1)
    assert ari(c.assignments, truth) == 1.0
    recomputed = float(((z - c.centroids[c.assignments]) ** 2).sum())
    assert c.inertia == pytest.approx(recomputed, rel=1e-12)


def test_kmeans_identical_points():
    c = kmeans(np.ones((5, 3)), 2, seed=0)
    assert c.inertia == 0.0
    assert c.assignments.max() < 2


def test_kmeans_inertia_trace_and_determinism():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(60, 4))
    c = kmeans(z, 4, restarts=3, seed=9)
    assert np.all(np.diff(c.inertia_trace) <= 1e-12)
    d = kmeans(z, 4, restarts=3, seed=9)
    assert np.array_equal(c.assignments, d.assignments) and c.inertia == d.inertia
    assert np.all(c.assignments < 4)


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        kmeans(np.array([[np.nan, 0.0], [1.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        kmeans(np.zeros((4, 2)), 2, restarts=0)
