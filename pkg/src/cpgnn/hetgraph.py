"""Heterogeneous graph data model, TSV ingestion/export and schema traversal."""
from __future__ import annotations

import logging
import os
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

REVERSE_SUFFIX = "_rev"


class GraphFormatError(ValueError):
    """Malformed or inconsistent graph input files."""


class NodeId(NamedTuple):
    type: int
    index: int


@dataclass(frozen=True)
class Relation:
    id: int
    name: str
    source_type: int
    target_type: int
    reverse_id: int
    is_reverse: bool = False


@dataclass
class SchemaOrder:
    """Breadth-first order of node types starting at the primary type.

    ``entries[0]`` is ``(primary, None)``; every later entry names the relation
    whose (already visited) source type feeds the entry's type.
    """

    entries: list[tuple[int, int | None]]
    unreachable: list[int] = field(default_factory=list)

    @property
    def types(self) -> list[int]:
        return [t for t, _ in self.entries]


@dataclass(eq=False)
class HetGraph:
    type_names: list[str]
    relations: list[Relation]
    primary_type: int
    counts: list[int]
    # adjacency[r]: (counts[target], counts[source]) binary CSR
    adjacency: list[sp.csr_matrix]
    labels: np.ndarray | None = None
    node_names: list[list[str]] | None = None
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if len(set(self.type_names)) != len(self.type_names):
            raise GraphFormatError("duplicate node type names")
        if not 0 <= self.primary_type < len(self.type_names):
            raise GraphFormatError(f"primary type index {self.primary_type} out of range")
        keys = {(r.source_type, r.target_type, r.name) for r in self.relations}
        if len(keys) != len(self.relations):
            raise GraphFormatError("duplicate (source, target, name) relation")
        for r, adj in zip(self.relations, self.adjacency):
            expected = (self.counts[r.target_type], self.counts[r.source_type])
            if adj.shape != expected:
                raise GraphFormatError(
                    f"relation {r.name!r}: adjacency shape {adj.shape}, expected {expected}"
                )
        if len(self.type_names) + len(self.relations) <= 2:
            log.warning("graph is not heterogeneous: %d types, %d relations",
                        len(self.type_names), len(self.relations))

    @property
    def num_primary(self) -> int:
        return self.counts[self.primary_type]

    @property
    def num_nodes(self) -> int:
        return int(sum(self.counts))

    @property
    def num_edges(self) -> int:
        return int(sum(a.nnz for a in self.adjacency))

    def type_id(self, name: str) -> int:
        try:
            return self.type_names.index(name)
        except ValueError:
            raise KeyError(f"unknown node type {name!r}") from None

    def relation_label(self, r: int) -> str:
        rel = self.relations[r]
        return f"{rel.name}({self.type_names[rel.source_type]}->{self.type_names[rel.target_type]})"

    def relations_into(self, t: int) -> list[int]:
        return [r.id for r in self.relations if r.target_type == t]

    def normalized_adjacency(self, r: int) -> sp.csr_matrix:
        """Adjacency of relation ``r`` with each target row divided by its degree."""
        cached = self._norm_cache.get(r)
        if cached is None:
            adj = self.adjacency[r]
            deg = np.asarray(adj.sum(axis=1)).ravel()
            inv = np.zeros_like(deg, dtype=np.float64)
            np.divide(1.0, deg, out=inv, where=deg > 0)
            cached = sp.csr_matrix(sp.diags(inv) @ adj)
            cached.sort_indices()
            self._norm_cache[r] = cached
        return cached

    def primary_adjacency(self) -> sp.csr_matrix:
        """Union of all primary-to-primary relations (the primary graph)."""
        n = self.num_primary
        p = self.primary_type
        out = sp.csr_matrix((n, n), dtype=np.float64)
        for rel, adj in zip(self.relations, self.adjacency):
            if rel.source_type == p and rel.target_type == p:
                out = out + adj
        out = sp.csr_matrix(out)
        out.data[:] = 1.0
        return out

    def global_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)]).astype(np.int64)

    def global_adjacency(self) -> sp.csr_matrix:
        """Undirected adjacency over all nodes, indexed by type offset + index."""
        off = self.global_offsets()
        rows, cols = [], []
        for rel, adj in zip(self.relations, self.adjacency):
            coo = adj.tocoo()
            rows.append(coo.row + off[rel.target_type])
            cols.append(coo.col + off[rel.source_type])
        n = self.num_nodes
        if rows:
            r = np.concatenate(rows)
            c = np.concatenate(cols)
        else:
            r = c = np.zeros(0, dtype=np.int64)
        g = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
        g.data[:] = 1.0
        g.sort_indices()
        return g

    def name_of(self, v: NodeId) -> str:
        if self.node_names is not None:
            return self.node_names[v.type][v.index]
        return f"{self.type_names[v.type]}:{v.index}"


def _build(
    type_names: list[str],
    counts: list[int],
    primary_type: int,
    forward: list[tuple[str, int, int, list[tuple[int, int]]]],
    labels: np.ndarray | None,
    node_names: list[list[str]] | None,
) -> HetGraph:
    """Materialize relations (each followed by its reverse) from forward edge lists."""
    relations: list[Relation] = []
    adjacency: list[sp.csr_matrix] = []
    taken = {(s, t, name) for name, s, t, _ in forward}
    for name, s, t, pairs in forward:
        rev_name = name + REVERSE_SUFFIX
        if (t, s, rev_name) in taken:
            raise GraphFormatError(
                f"relation {rev_name!r} collides with the automatic reverse of {name!r}"
            )
        fid = len(relations)
        relations.append(Relation(fid, name, s, t, fid + 1))
        relations.append(Relation(fid + 1, rev_name, t, s, fid, is_reverse=True))
        if pairs:
            src, dst = np.array(pairs, dtype=np.int64).T
        else:
            src = dst = np.zeros(0, dtype=np.int64)
        adj = sp.csr_matrix((np.ones(len(src)), (dst, src)), shape=(counts[t], counts[s]))
        adj.sum_duplicates()
        adj.data[:] = 1.0
        adj.sort_indices()
        rev = sp.csr_matrix(adj.T)
        rev.sort_indices()
        adjacency += [adj, rev]
    return HetGraph(type_names, relations, primary_type, counts, adjacency, labels, node_names)


def from_edges(
    type_names: list[str],
    counts: list[int],
    primary_type: int,
    edges: dict[tuple[str, int, int], list[tuple[int, int]]],
    labels: np.ndarray | None = None,
) -> HetGraph:
    """Construct a graph in memory; ``edges`` maps (name, src_type, dst_type) to index pairs."""
    forward = [(name, s, t, list(pairs)) for (name, s, t), pairs in edges.items()]
    names = [[f"{tn}{i}" for i in range(c)] for tn, c in zip(type_names, counts)]
    return _build(list(type_names), list(counts), primary_type, forward, labels, names)


def _rows(path: str | os.PathLike, ncols: int):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != ncols or any(not c for c in cols):
                raise GraphFormatError(
                    f"{path}:{lineno}: expected {ncols} tab-separated columns, got {line!r}"
                )
            yield lineno, cols


def load_graph(
    nodes_path: str | os.PathLike,
    edges_path: str | os.PathLike,
    labels_path: str | os.PathLike | None = None,
    primary_type_name: str = "",
) -> HetGraph:
    type_names: list[str] = []
    node_names: list[list[str]] = []
    lookup: dict[str, NodeId] = {}
    for lineno, (node, tname) in _rows(nodes_path, 2):
        if node in lookup:
            raise GraphFormatError(f"{nodes_path}:{lineno}: duplicate node id {node!r}")
        if tname not in type_names:
            type_names.append(tname)
            node_names.append([])
        t = type_names.index(tname)
        lookup[node] = NodeId(t, len(node_names[t]))
        node_names[t].append(node)
    if primary_type_name not in type_names:
        raise GraphFormatError(
            f"unknown primary type {primary_type_name!r}; known types: {type_names}"
        )
    primary = type_names.index(primary_type_name)
    counts = [len(n) for n in node_names]

    forward: dict[tuple[str, int, int], list[tuple[int, int]]] = {}
    for lineno, (src, dst, rname) in _rows(edges_path, 3):
        for node in (src, dst):
            if node not in lookup:
                raise GraphFormatError(f"{edges_path}:{lineno}: undeclared node {node!r}")
        u, w = lookup[src], lookup[dst]
        forward.setdefault((rname, u.type, w.type), []).append((u.index, w.index))

    labels = None
    if labels_path is not None:
        labels = np.full(counts[primary], -1, dtype=np.int64)
        for lineno, (node, cls) in _rows(labels_path, 2):
            if node not in lookup:
                raise GraphFormatError(f"{labels_path}:{lineno}: undeclared node {node!r}")
            try:
                c = int(cls)
            except ValueError:
                raise GraphFormatError(f"{labels_path}:{lineno}: bad class id {cls!r}") from None
            if c < 0:
                raise GraphFormatError(f"{labels_path}:{lineno}: negative class id {c}")
            v = lookup[node]
            if v.type != primary:
                log.warning("%s:%d: label on non-primary node %r ignored", labels_path, lineno, node)
                continue
            labels[v.index] = c

    fwd = [(name, s, t, pairs) for (name, s, t), pairs in forward.items()]
    return _build(type_names, counts, primary, fwd, labels, node_names)


def save_graph(
    g: HetGraph,
    nodes_path: str | os.PathLike,
    edges_path: str | os.PathLike,
    labels_path: str | os.PathLike | None = None,
) -> None:
    """Write the three TSV files; reloading them reproduces ``g`` exactly."""
    names = g.node_names or [[f"{tn}{i}" for i in range(c)] for tn, c in zip(g.type_names, g.counts)]
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        for t, tn in enumerate(g.type_names):
            for n in names[t]:
                fh.write(f"{n}\t{tn}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        for rel, adj in zip(g.relations, g.adjacency):
            if rel.is_reverse:
                continue
            coo = adj.tocoo()
            order = np.lexsort((coo.row, coo.col))
            for dst, src in zip(coo.row[order], coo.col[order]):
                fh.write(f"{names[rel.source_type][src]}\t{names[rel.target_type][dst]}\t{rel.name}\n")
    if labels_path is not None and g.labels is not None:
        with open(labels_path, "w", encoding="utf-8", newline="\n") as fh:
            for i, c in enumerate(g.labels):
                if c >= 0:
                    fh.write(f"{names[g.primary_type][i]}\t{int(c)}\n")


def schema_bfs(g: HetGraph) -> SchemaOrder:
    p = g.primary_type
    entries: list[tuple[int, int | None]] = [(p, None)]
    seen = {p}
    queue = deque([p])
    while queue:
        s = queue.popleft()
        for rel in g.relations:  # ascending RelationId
            if rel.source_type == s and rel.target_type not in seen:
                seen.add(rel.target_type)
                entries.append((rel.target_type, rel.id))
                queue.append(rel.target_type)
    unreachable = [t for t in range(len(g.type_names)) if t not in seen]
    if unreachable:
        log.info("types unreachable from primary: %s", [g.type_names[t] for t in unreachable])
    return SchemaOrder(entries, unreachable)


def primary_neighbors(g: HetGraph, v: NodeId) -> set[NodeId]:
    if v.type != g.primary_type:
        raise ValueError(f"node {v} is not of primary type {g.type_names[g.primary_type]!r}")
    adj = g.primary_adjacency()
    row = adj.indices[adj.indptr[v.index]:adj.indptr[v.index + 1]]
    return {NodeId(g.primary_type, int(u)) for u in row if u != v.index}
