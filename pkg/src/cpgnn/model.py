"""CP-GNN network: embedding transformation, relation attention, context aggregation, GRU, loss."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .hetgraph import HetGraph, SchemaOrder, schema_bfs
from .ndiff import Tape, Tensor
from .sampler import ContextSampleSet

CHECKPOINT_VERSION = 1
LENGTH_LOGIT_INIT = 5.0
GRU_GATES = ("r", "u", "c")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    heads: int = 8
    qk_dim: int = 128
    node_dropout: float = 0.3
    max_length: int = 2
    seed: int = 0
    # ablation switches: uniform relation weights / frozen length weights
    relation_attention: bool = True
    length_attention: bool = True

    def __post_init__(self) -> None:
        if self.embed_dim < 1 or self.heads < 1 or self.embed_dim % self.heads:
            raise ValueError(f"embed_dim ({self.embed_dim}) must be divisible by heads ({self.heads})")
        if self.qk_dim < 1:
            raise ValueError("qk_dim must be >= 1")
        if not 0.0 <= self.node_dropout < 1.0:
            raise ValueError("node_dropout must lie in [0, 1)")
        if self.max_length < 0:
            raise ValueError("max_length must be >= 0")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


@dataclass
class CpGnnParams:
    """Named float64 arrays; ``Z_P`` holds the learned primary embeddings."""

    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "CpGnnParams":
        return CpGnnParams({k: v.copy() for k, v in self.arrays.items()})

    @property
    def embeddings(self) -> np.ndarray:
        return self.arrays["Z_P"]

    def length_weights(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.arrays["length_logits"][0]))


@dataclass
class AttentionReport:
    relation_labels: list[str]
    source_types: list[str]
    target_types: list[str]
    # layers[l - 1] has shape (heads, relations)
    layers: list[np.ndarray] = field(default_factory=list)
    length: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def write_csv(self, out_dir: str | os.PathLike) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for l, w in enumerate(self.layers, 1):
            path = os.path.join(out_dir, f"layer_{l}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                out = csv.writer(fh, lineterminator="\n")
                out.writerow(["relation", "source_type", "target_type"]
                             + [f"head_{h}" for h in range(w.shape[0])])
                for r, label in enumerate(self.relation_labels):
                    out.writerow([label, self.source_types[r], self.target_types[r]]
                                 + [repr(float(x)) for x in w[:, r]])
            written.append(path)
        path = os.path.join(out_dir, "length_attention.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["k", "alpha"])
            for k, a in enumerate(self.length):
                out.writerow([k, repr(float(a))])
        written.append(path)
        return written


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_params(g: HetGraph, cfg: ModelConfig) -> CpGnnParams:
    rng = np.random.default_rng(cfg.seed)
    d, qk, K = cfg.embed_dim, cfg.qk_dim, cfg.max_length
    arrays: dict[str, np.ndarray] = {"Z_P": _glorot(rng, g.num_primary, d)}
    for t, _ in schema_bfs(g).entries[1:]:
        tn = g.type_names[t]
        arrays[f"embed.{tn}.W"] = _glorot(rng, d, d)
        arrays[f"embed.{tn}.B"] = np.zeros((1, d))
    for l in range(1, K + 1):
        for h in range(cfg.heads):
            for tn in g.type_names:
                arrays[f"L{l}.q.{h}.{tn}"] = _glorot(rng, d, qk)
                arrays[f"L{l}.k.{h}.{tn}"] = _glorot(rng, d, qk)
        arrays[f"L{l}.W1"] = _glorot(rng, d, cfg.head_dim)
        arrays[f"L{l}.B1"] = np.zeros((1, cfg.head_dim))
        arrays[f"L{l}.W2"] = _glorot(rng, d, d)
        arrays[f"L{l}.B2"] = np.zeros((1, d))
        for gate in GRU_GATES:
            arrays[f"L{l}.gru.W_{gate}"] = _glorot(rng, d, d)
            arrays[f"L{l}.gru.U_{gate}"] = _glorot(rng, d, d)
            arrays[f"L{l}.gru.b_{gate}"] = np.zeros((1, d))
    arrays["length_logits"] = np.full((1, K + 1), LENGTH_LOGIT_INIT)
    return CpGnnParams(arrays)


def bind(tape: Tape, params: CpGnnParams) -> dict[str, Tensor]:
    return {name: tape.leaf(name, arr) for name, arr in params.arrays.items()}


# -- building blocks ----------------------------------------------------------

def embed_transform(tape: Tape, g: HetGraph, w: dict[str, Tensor], order: SchemaOrder,
                    z: Tensor) -> list[Tensor]:
    """Initial context vectors per type: ``ReLU(norm(A_ST) C_S W + B)`` along the schema order."""
    d = z.shape[1]
    ctx: list[Tensor | None] = [None] * len(g.type_names)
    ctx[g.primary_type] = z
    for t, r in order.entries[1:]:
        src = g.relations[r].source_type
        tn = g.type_names[t]
        msg = tape.sparse_dense_matmul(g.normalized_adjacency(r), ctx[src])
        ctx[t] = tape.relu(tape.add_bias(tape.matmul(msg, w[f"embed.{tn}.W"]), w[f"embed.{tn}.B"]))
    for t in order.unreachable:
        ctx[t] = Tensor(np.zeros((g.counts[t], d)))
    return ctx


def graph_summary(tape: Tape, c: Tensor, dropout: float, training: bool,
                  rng: np.random.Generator | None) -> Tensor:
    """Mean context vector of a type, over rows kept by node dropout when training."""
    n = c.shape[0]
    if n == 0:
        raise ValueError("graph_summary: node type has no nodes")
    if not training or dropout == 0.0:
        return tape.mean_rows(c)
    keep = rng.random(n) >= dropout
    if not keep.any():
        keep[rng.integers(n)] = True
    mask = keep * (n / keep.sum())
    return tape.mean_rows(tape.dropout_mask_apply(c, mask))


def relation_attention(tape: Tape, g: HetGraph, summaries: list[Tensor], w: dict[str, Tensor],
                       layer: int, cfg: ModelConfig) -> tuple[dict[tuple[int, int], Tensor], np.ndarray]:
    """Per-head softmax weights over the relations entering each target type.

    Returns ``{(head, relation): 1x1 weight}`` and the same values as a
    ``(heads, relations)`` array.
    """
    weights: dict[tuple[int, int], Tensor] = {}
    table = np.zeros((cfg.heads, len(g.relations)))
    inv_scale = 1.0 / np.sqrt(cfg.qk_dim)
    for t in range(len(g.type_names)):
        rels = g.relations_into(t)
        if not rels:
            continue
        if summaries[t] is None or any(summaries[g.relations[r].source_type] is None for r in rels):
            raise ValueError(f"relation_attention: missing summary for type {g.type_names[t]!r}")
        tn = g.type_names[t]
        for h in range(cfg.heads):
            if not cfg.relation_attention:
                for r in rels:
                    weights[h, r] = Tensor(1.0 / len(rels))
                    table[h, r] = 1.0 / len(rels)
                continue
            q = tape.matmul(summaries[t], w[f"L{layer}.q.{h}.{tn}"])
            keys: dict[int, Tensor] = {}
            scores = []
            for r in rels:
                s = g.relations[r].source_type
                if s not in keys:
                    keys[s] = tape.matmul(summaries[s], w[f"L{layer}.k.{h}.{g.type_names[s]}"])
                scores.append(tape.scale(tape.row_sum(tape.mul(q, keys[s])), inv_scale))
            probs = tape.softmax_rows(tape.concat_cols(scores))
            for j, r in enumerate(rels):
                weights[h, r] = tape.col_select(probs, j)
                table[h, r] = probs.data[0, j]
    return weights, table


def layer_forward(tape: Tape, g: HetGraph, prev: list[Tensor], attn: dict[tuple[int, int], Tensor],
                  w: dict[str, Tensor], layer: int, cfg: ModelConfig) -> list[Tensor]:
    """One aggregation layer, applied to every node type."""
    d = cfg.embed_dim
    out: list[Tensor] = []
    for t in range(len(g.type_names)):
        rels = g.relations_into(t)
        msgs = {r: tape.sparse_dense_matmul(g.normalized_adjacency(r), prev[g.relations[r].source_type])
                for r in rels}
        heads = []
        for h in range(cfg.heads):
            if rels:
                acc = None
                for r in rels:
                    term = tape.scale(msgs[r], attn[h, r])
                    acc = term if acc is None else tape.add(acc, term)
            else:
                acc = Tensor(np.zeros((g.counts[t], d)))
            heads.append(tape.relu(tape.add_bias(tape.matmul(acc, w[f"L{layer}.W1"]), w[f"L{layer}.B1"])))
        cat = tape.concat_cols(heads)
        out.append(tape.matmul(tape.add_bias(cat, w[f"L{layer}.B2"]), w[f"L{layer}.W2"]))
    return out


def gru_update(tape: Tape, hidden: Tensor, x: Tensor, w: dict[str, Tensor], layer: int) -> Tensor:
    if hidden.shape != x.shape:
        raise ValueError(f"gru_update: shape mismatch {hidden.shape} vs {x.shape}")
    p = f"L{layer}.gru."

    def gate(name: str, state: Tensor) -> Tensor:
        pre = tape.add(tape.matmul(x, w[p + f"W_{name}"]), tape.matmul(state, w[p + f"U_{name}"]))
        return tape.add_bias(pre, w[p + f"b_{name}"])

    reset = tape.sigmoid(gate("r", hidden))
    update = tape.sigmoid(gate("u", hidden))
    cand = tape.tanh(gate("c", tape.mul(reset, hidden)))
    # (1 - u) * h + u * cand
    return tape.add(hidden, tape.mul(update, tape.sub(cand, hidden)))


# -- full network -------------------------------------------------------------

@dataclass
class ForwardResult:
    contexts: list[Tensor]  # C_P^0 .. C_P^K
    weights: dict[str, Tensor]
    attention: AttentionReport


def _layer_step(tape, g, ctx, w, layer, cfg, training, rng):
    summaries = [graph_summary(tape, c, cfg.node_dropout, training, rng) for c in ctx]
    attn, table = relation_attention(tape, g, summaries, w, layer, cfg)
    raw = layer_forward(tape, g, ctx, attn, w, layer, cfg)
    nxt = list(raw)
    p = g.primary_type
    nxt[p] = gru_update(tape, ctx[p], raw[p], w, layer)
    return nxt, table


def _empty_report(g: HetGraph) -> AttentionReport:
    return AttentionReport(
        [g.relation_label(r.id) for r in g.relations],
        [g.type_names[r.source_type] for r in g.relations],
        [g.type_names[r.target_type] for r in g.relations],
    )


def forward(g: HetGraph, params: CpGnnParams, cfg: ModelConfig, *, training: bool = False,
            rng: np.random.Generator | None = None, tape: Tape | None = None) -> ForwardResult:
    """Single pass producing every ``C_P^k`` for k = 0..K."""
    tape = tape if tape is not None else Tape(record=False)
    return forward_bound(tape, g, bind(tape, params), cfg, training=training, rng=rng)


def forward_bound(tape: Tape, g: HetGraph, w: dict[str, Tensor], cfg: ModelConfig, *,
                  training: bool = False, rng: np.random.Generator | None = None) -> ForwardResult:
    """Like :func:`forward`, over leaves already bound on ``tape``."""
    if training and rng is None:
        raise ValueError("training forward needs an rng for node dropout")
    order = schema_bfs(g)
    ctx = embed_transform(tape, g, w, order, w["Z_P"])
    contexts = [ctx[g.primary_type]]
    report = _empty_report(g)
    for layer in range(1, cfg.max_length + 1):
        ctx, table = _layer_step(tape, g, ctx, w, layer, cfg, training, rng)
        contexts.append(ctx[g.primary_type])
        report.layers.append(table)
    report.length = 1.0 / (1.0 + np.exp(-w["length_logits"].data[0]))
    return ForwardResult(contexts, w, report)


def forward_nested(g: HetGraph, params: CpGnnParams, cfg: ModelConfig) -> list[np.ndarray]:
    """Literal per-length recomputation (every k restarts from the embedding); eval mode only."""
    tape = Tape(record=False)
    w = bind(tape, params)
    order = schema_bfs(g)
    out = [embed_transform(tape, g, w, order, w["Z_P"])[g.primary_type].data]
    for k in range(1, cfg.max_length + 1):
        ctx = embed_transform(tape, g, w, order, w["Z_P"])
        for layer in range(1, k + 1):
            ctx, _ = _layer_step(tape, g, ctx, w, layer, cfg, False, None)
        out.append(ctx[g.primary_type].data)
    return out


def pair_score(z_i: np.ndarray, c_i: np.ndarray, c_j: np.ndarray, z_j: np.ndarray) -> float:
    """Sigmoid of the inner product of the two context-masked embeddings."""
    s = float(np.dot(np.ravel(z_i) * np.ravel(c_i), np.ravel(z_j) * np.ravel(c_j)))
    return float(0.5 * (1.0 + np.tanh(0.5 * s)))


def loss(tape: Tape, samples: ContextSampleSet, contexts: list[Tensor], z: Tensor,
         length_logits: Tensor) -> Tensor:
    """Negative-sampling loss weighted by length attention, with a ``-log alpha_k`` penalty per anchor."""
    K = len(contexts) - 1
    if samples.max_length != K:
        raise ValueError(f"samples built for K={samples.max_length}, contexts for K={K}")
    n_anchor = len(samples.anchors)
    if n_anchor == 0:
        return tape.scale(tape.sum(length_logits), 0.0)
    alpha = tape.sigmoid(length_logits)
    log_alpha = tape.log_sigmoid(length_logits)
    total = None
    for k, ck in enumerate(contexts):
        masked = tape.mul(z, ck)
        fit = None
        pa, pn = samples.pos_anchor[k], samples.pos_node[k]
        if len(pa):
            s = tape.row_sum(tape.mul(tape.row_select(masked, pa), tape.row_select(masked, pn)))
            fit = tape.sum(tape.log_sigmoid(s))
        na, nn = samples.neg_anchor[k], samples.neg_node[k]
        if len(na):
            s = tape.row_sum(tape.mul(tape.row_select(masked, na), tape.row_select(masked, nn)))
            neg = tape.sum(tape.log_sigmoid(tape.scale(s, -1.0)))
            fit = neg if fit is None else tape.add(fit, neg)
        term = tape.scale(tape.col_select(log_alpha, k), -float(n_anchor))
        if fit is not None:
            term = tape.sub(term, tape.mul(tape.col_select(alpha, k), fit))
        total = term if total is None else tape.add(total, term)
    return total


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path: str | os.PathLike, params: CpGnnParams, cfg: ModelConfig,
                    extra: dict | None = None) -> None:
    names = list(params.arrays)
    meta = {"version": CHECKPOINT_VERSION, "model": asdict(cfg), "names": names, "extra": extra or {}}
    payload = {f"a{i}": params.arrays[n] for i, n in enumerate(names)}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **payload)


def load_checkpoint(path: str | os.PathLike) -> tuple[CpGnnParams, ModelConfig, dict]:
    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        arrays = {n: f[f"a{i}"].copy() for i, n in enumerate(meta["names"])}
    return CpGnnParams(arrays), ModelConfig(**meta["model"]), meta.get("extra", {})
