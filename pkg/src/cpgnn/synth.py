"""Planted-partition heterogeneous graphs with known community labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hetgraph import HetGraph, _build

PRIMARY = "P"
OWN_COMMUNITY_P = 0.8


@dataclass(frozen=True)
class SynthConfig:
    communities: int = 2
    primary_per_comm: int = 20
    aux_types: int = 2
    aux_per_comm: int = 5
    noise: float = 0.05
    # optional community-free auxiliary type hanging off the first auxiliary type
    bridge_nodes: int = 0
    bridge_degree: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.communities < 1 or self.primary_per_comm < 1:
            raise ValueError("communities and primary_per_comm must be >= 1")
        if self.aux_types < 0 or self.aux_per_comm < 1:
            raise ValueError("aux_types must be >= 0 and aux_per_comm >= 1")
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("noise must lie in [0, 0.5)")
        if self.bridge_nodes < 0 or self.bridge_degree < 1:
            raise ValueError("bridge_nodes must be >= 0 and bridge_degree >= 1")
        if self.bridge_nodes and self.aux_types < 1:
            raise ValueError("bridge nodes need at least one auxiliary type")


def planted_partition(cfg: SynthConfig) -> HetGraph:
    """Primary nodes link to auxiliaries of their own community with probability 0.8
    and to auxiliaries of other communities with probability ``noise``.

    There are no primary-primary edges, so communities are visible only through
    context paths.  Bridge nodes (type ``B``) attach to random nodes of the first
    auxiliary type regardless of community, which makes 3-length paths uninformative.
    """
    rng = np.random.default_rng(cfg.seed)
    c, n, m = cfg.communities, cfg.primary_per_comm, cfg.aux_per_comm
    type_names = [PRIMARY] + [f"A{t}" for t in range(cfg.aux_types)]
    counts = [c * n] + [c * m] * cfg.aux_types
    names = [[f"p{i // n}_{i % n}" for i in range(c * n)]]
    names += [[f"a{t}_{j // m}_{j % m}" for j in range(c * m)] for t in range(cfg.aux_types)]
    labels = np.repeat(np.arange(c, dtype=np.int64), n)
    aux_comm = np.repeat(np.arange(c), m)
    forward = []
    for t in range(cfg.aux_types):
        draw = rng.random((c * n, c * m))
        same = labels[:, None] == aux_comm[None, :]
        hit = np.where(same, draw < OWN_COMMUNITY_P, draw < cfg.noise)
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(hit))]
        forward.append((f"link{t}", 0, t + 1, pairs))
    if cfg.bridge_nodes:
        type_names.append("B")
        counts.append(cfg.bridge_nodes)
        names.append([f"b_{j}" for j in range(cfg.bridge_nodes)])
        deg = min(cfg.bridge_degree, cfg.bridge_nodes)
        pairs = []
        for j in range(c * m):
            for b in np.sort(rng.choice(cfg.bridge_nodes, size=deg, replace=False)):
                pairs.append((j, int(b)))
        forward.append(("bridge", 1, len(type_names) - 1, pairs))
    return _build(type_names, counts, 0, forward, labels, names)
