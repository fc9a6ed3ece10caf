"""k-means on embeddings and community-quality metrics (F1, NMI, ARI, purity)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class Clustering:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_trace: list[float] = field(default_factory=list)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> Clustering:
    k = len(centers)
    labels = None
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        dist = _sq_dists(x, centers)
        new = dist.argmin(1)
        trace.append(float(dist[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        own = dist[np.arange(len(x)), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(own.argmax())
                centers[j] = x[far]
                own[far] = 0.0
    dist = _sq_dists(x, centers)
    labels = dist.argmin(1)
    inertia = float(((x - centers[labels]) ** 2).sum())
    return Clustering(labels, centers, inertia, it, trace)


def kmeans(z: np.ndarray, n_clusters: int, restarts: int = 10, max_iter: int = 300,
           seed: int = 0) -> Clustering:
    """k-means++ seeded Lloyd iterations; the restart with the lowest inertia wins."""
    x = np.asarray(z, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("kmeans expects an (N, d) matrix")
    if n_clusters < 1 or n_clusters > len(x):
        raise ValueError(f"n_clusters={n_clusters} must lie in [1, {len(x)}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("kmeans input contains non-finite values")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), r]))
        result = _lloyd(x, _kmeans_pp(x, n_clusters, rng), max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


# -- metrics ------------------------------------------------------------------

def _check(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if len(a) != len(b):
        raise ValueError(f"label length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty labelings")
    return a, b


def contingency(a, b) -> np.ndarray:
    a, b = _check(a, b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    t = contingency(a, b)
    return bool(((t > 0).sum(0) == 1).all() and ((t > 0).sum(1) == 1).all())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    a, b = _check(a, b)
    t = contingency(a, b).astype(np.float64)
    n = t.sum()
    ha, hb = _entropy(t.sum(1)), _entropy(t.sum(0))
    if ha == 0.0 or hb == 0.0:
        return 1.0 if _same_partition(a, b) else 0.0
    pij = t / n
    outer = np.outer(t.sum(1), t.sum(0)) / (n * n)
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return float(min(max(mi / (0.5 * (ha + hb)), 0.0), 1.0))


def _pairs(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def ari(a, b) -> float:
    a, b = _check(a, b)
    t = contingency(a, b).astype(np.float64)
    n = t.sum()
    index = _pairs(t).sum()
    sa, sb = _pairs(t.sum(1)).sum(), _pairs(t.sum(0)).sum()
    total = _pairs(n)
    expected = sa * sb / total if total > 0 else 0.0
    max_index = 0.5 * (sa + sb)
    if max_index == expected:
        return 1.0 if _same_partition(a, b) else 0.0
    return float((index - expected) / (max_index - expected))


def purity(pred, truth) -> float:
    t = contingency(pred, truth)
    return float(t.max(1).sum() / t.sum())


def f1_matched(pred, truth) -> float:
    """Micro F1 after mapping clusters to classes by maximum-weight matching.

    Nodes in clusters left unmatched carry no predicted class, so precision is taken over
    matched clusters and recall over all nodes. With as many clusters as classes this is accuracy.
    """
    t = contingency(pred, truth)
    n = int(t.sum())
    # most correct nodes first, then the smaller matched mass among ties
    weight = t * (n + 1) - t.sum(1, keepdims=True)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    tp = int(t[rows, cols].sum())
    matched = int(t[rows].sum())
    return 2.0 * tp / (matched + n)


def evaluate(pred, truth) -> dict[str, float]:
    return {"f1": f1_matched(pred, truth), "nmi": nmi(pred, truth),
            "ari": ari(pred, truth), "purity": purity(pred, truth)}
