"""Context-neighbor extraction: exact path enumeration and random-walk sampling.

A k-length context path runs from a primary node through exactly ``k`` distinct
auxiliary nodes to another primary node.  ``context_neighbors_exact`` enumerates
those paths and is exponential in ``k``; ``sample_context_set`` draws endpoints
with self-avoiding walks whose cost is linear in ``k``.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .hetgraph import HetGraph, NodeId

ORACLE_MAX_LENGTH = 6
ORACLE_MAX_NODES = 5_000


@dataclass(frozen=True)
class SamplerConfig:
    max_length: int = 2
    positives: int = 20
    negatives: int = 3
    walks: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_length < 0:
            raise ValueError("max_length must be >= 0")
        if self.positives < 1:
            raise ValueError("positives must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.walks < self.positives:
            raise ValueError("walks must be >= positives")


@dataclass
class ContextSampleSet:
    """Flat per-length sample arrays (indices are within the primary type).

    For length ``k``: ``pos_anchor[k][i]`` is paired with ``pos_node[k][i]``,
    ``neg_anchor[k][i]`` with ``neg_node[k][i]``.
    """

    num_primary: int
    max_length: int
    anchors: np.ndarray
    pos_anchor: list[np.ndarray] = field(default_factory=list)
    pos_node: list[np.ndarray] = field(default_factory=list)
    neg_anchor: list[np.ndarray] = field(default_factory=list)
    neg_node: list[np.ndarray] = field(default_factory=list)

    def positives(self, v: int, k: int) -> list[int]:
        return self.pos_node[k][self.pos_anchor[k] == v].tolist()

    def negatives(self, v: int, k: int) -> list[int]:
        return self.neg_node[k][self.neg_anchor[k] == v].tolist()

    def to_json(self) -> dict:
        return {
            "num_primary": self.num_primary,
            "max_length": self.max_length,
            "anchors": self.anchors.tolist(),
            "pos_anchor": [a.tolist() for a in self.pos_anchor],
            "pos_node": [a.tolist() for a in self.pos_node],
            "neg_anchor": [a.tolist() for a in self.neg_anchor],
            "neg_node": [a.tolist() for a in self.neg_node],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ContextSampleSet":
        arr = lambda xs: [np.asarray(x, dtype=np.int64) for x in xs]  # noqa: E731
        return cls(
            obj["num_primary"], obj["max_length"], np.asarray(obj["anchors"], dtype=np.int64),
            arr(obj["pos_anchor"]), arr(obj["pos_node"]), arr(obj["neg_anchor"]), arr(obj["neg_node"]),
        )


def _check_oracle_limits(g: HetGraph, k: int, force: bool) -> None:
    if force:
        return
    if k > ORACLE_MAX_LENGTH or g.num_nodes > ORACLE_MAX_NODES:
        raise ValueError(
            f"exact enumeration limited to k <= {ORACLE_MAX_LENGTH} and "
            f"<= {ORACLE_MAX_NODES} nodes (got k={k}, {g.num_nodes} nodes); pass force=True"
        )


def context_neighbors_exact(g: HetGraph, v: NodeId, k: int, *, force: bool = False) -> set[NodeId]:
    """All primary nodes joined to ``v`` by a simple path with ``k`` auxiliary intermediates."""
    if v.type != g.primary_type:
        raise ValueError(f"node {v} is not of primary type")
    if k < 0:
        raise ValueError("k must be >= 0")
    _check_oracle_limits(g, k, force)
    adj = g.global_adjacency()
    off = g.global_offsets()
    p = g.primary_type
    lo, hi = off[p], off[p + 1]
    is_primary = lambda x: lo <= x < hi  # noqa: E731
    start = int(off[p] + v.index)
    found: set[NodeId] = set()

    def nbrs(x: int) -> np.ndarray:
        return adj.indices[adj.indptr[x]:adj.indptr[x + 1]]

    def extend(x: int, depth: int, visited: set[int]) -> None:
        for y in nbrs(x):
            y = int(y)
            if y in visited:
                continue
            if depth == k:
                if is_primary(y):
                    found.add(NodeId(p, y - lo))
            elif not is_primary(y):
                visited.add(y)
                extend(y, depth + 1, visited)
                visited.discard(y)

    extend(start, 0, {start})
    return found


class _WalkIndex:
    """Global CSR split by target class: hops into auxiliary nodes vs into primary nodes."""

    def __init__(self, g: HetGraph) -> None:
        adj = g.global_adjacency()
        off = g.global_offsets()
        p = g.primary_type
        self.lo, self.hi = int(off[p]), int(off[p + 1])
        coo = adj.tocoo()
        to_primary = (coo.col >= self.lo) & (coo.col < self.hi)
        n = adj.shape[0]
        self.aux_ptr, self.aux_idx = self._csr(coo.row[~to_primary], coo.col[~to_primary], n)
        self.pri_ptr, self.pri_idx = self._csr(coo.row[to_primary], coo.col[to_primary], n)

    @staticmethod
    def _csr(rows: np.ndarray, cols: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, rows + 1, 1)
        return np.cumsum(ptr), cols.astype(np.int64)


def _step(ptr: np.ndarray, idx: np.ndarray, at: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniform hop per walker; -1 marks a walker with no admissible neighbor."""
    start = ptr[at]
    deg = ptr[at + 1] - start
    pick = np.floor(rng.random(len(at)) * np.maximum(deg, 1)).astype(np.int64)
    out = np.full(len(at), -1, dtype=np.int64)
    ok = deg > 0
    out[ok] = idx[start[ok] + pick[ok]]
    return out


def _walk_endpoints(index: _WalkIndex, anchor: int, k: int, walks: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Endpoints (global ids) of surviving self-avoiding walks, in walk order."""
    at = np.full(walks, anchor, dtype=np.int64)
    path = [at]
    alive = np.ones(walks, dtype=bool)
    for hop in range(k + 1):
        last = hop == k
        ptr, idx = (index.pri_ptr, index.pri_idx) if last else (index.aux_ptr, index.aux_idx)
        nxt = _step(ptr, idx, at, rng)
        alive &= nxt >= 0
        for prev in path:
            alive &= nxt != prev
        nxt = np.where(alive, nxt, anchor)
        path.append(nxt)
        at = nxt
    return at[alive]


def _anchor_rng(seed: int, draw: int, anchor: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), draw, anchor, k]))


def sample_context_set(g: HetGraph, cfg: SamplerConfig, *, draw: int = 0) -> ContextSampleSet:
    """Sample positives and negatives for every primary anchor and length 0..K.

    Each (anchor, k) uses its own generator derived from ``(seed, draw, anchor, k)``,
    so the result does not depend on processing order.  ``draw`` distinguishes
    resampling rounds during training.
    """
    n = g.num_primary
    if n < 2:
        raise ValueError("need at least two primary nodes")
    index = _WalkIndex(g)
    lo = index.lo
    out = ContextSampleSet(n, cfg.max_length, np.arange(n, dtype=np.int64))
    for k in range(cfg.max_length + 1):
        pa, pn, na, nn = [], [], [], []
        for v in range(n):
            rng = _anchor_rng(cfg.seed, draw, v, k)
            ends = _walk_endpoints(index, lo + v, k, cfg.walks, rng) - lo
            _, first = np.unique(ends, return_index=True)
            pos = ends[np.sort(first)][: cfg.positives]
            if len(pos) == 0:
                continue
            pa.append(np.full(len(pos), v, dtype=np.int64))
            pn.append(pos)
            if cfg.negatives:
                allowed = np.ones(n, dtype=bool)
                allowed[v] = False
                allowed[pos] = False
                pool = np.flatnonzero(allowed)
                if len(pool):
                    neg = pool[rng.integers(0, len(pool), size=len(pos) * cfg.negatives)]
                    na.append(np.full(len(neg), v, dtype=np.int64))
                    nn.append(neg)
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)  # noqa: E731
        out.pos_anchor.append(cat(pa))
        out.pos_node.append(cat(pn))
        out.neg_anchor.append(cat(na))
        out.neg_node.append(cat(nn))
    return out


def graph_fingerprint(g: HetGraph) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([g.type_names, g.counts, g.primary_type,
                         [(r.name, r.source_type, r.target_type) for r in g.relations]]).encode())
    for adj in g.adjacency:
        h.update(adj.indptr.tobytes())
        h.update(adj.indices.tobytes())
    return h.hexdigest()


def cache_key(g: HetGraph, cfg: SamplerConfig, draw: int = 0) -> str:
    return hashlib.sha256(
        json.dumps([graph_fingerprint(g), asdict(cfg), draw], sort_keys=True).encode()
    ).hexdigest()[:32]


def cached_sample_context_set(g: HetGraph, cfg: SamplerConfig, cache_dir: str | os.PathLike,
                              *, draw: int = 0) -> ContextSampleSet:
    """``sample_context_set`` backed by a JSON file keyed on graph fingerprint and config."""
    path = os.path.join(cache_dir, f"samples-{cache_key(g, cfg, draw)}.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return ContextSampleSet.from_json(json.load(fh))
    samples = sample_context_set(g, cfg, draw=draw)
    os.makedirs(cache_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(samples.to_json(), fh)
    return samples
