"""Context path-based graph neural network for heterogeneous community detection."""

__version__ = "0.1.0"

from .cluster_eval import Clustering, ari, evaluate, f1_matched, kmeans, nmi, purity
from .hetgraph import (
    GraphFormatError,
    HetGraph,
    NodeId,
    Relation,
    SchemaOrder,
    load_graph,
    primary_neighbors,
    save_graph,
    schema_bfs,
)
from .model import (
    AttentionReport,
    CpGnnParams,
    ModelConfig,
    forward,
    init_params,
    load_checkpoint,
    pair_score,
    save_checkpoint,
)
from .sampler import ContextSampleSet, SamplerConfig, context_neighbors_exact, sample_context_set
from .synth import SynthConfig, planted_partition
from .train import History, TrainConfig, train

__all__ = [
    "AttentionReport", "Clustering", "ContextSampleSet", "CpGnnParams", "GraphFormatError",
    "HetGraph", "History", "ModelConfig", "NodeId", "Relation", "SamplerConfig", "SchemaOrder",
    "SynthConfig", "TrainConfig", "ari", "context_neighbors_exact", "evaluate", "f1_matched",
    "forward", "init_params", "kmeans", "load_checkpoint", "load_graph", "nmi", "pair_score",
    "primary_neighbors", "purity", "sample_context_set", "save_checkpoint", "save_graph",
    "planted_partition", "schema_bfs", "train",
]
