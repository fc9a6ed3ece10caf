"""``cpgnn`` command-line entry point.

Every command writes its outputs into ``--out-dir`` together with a
``manifest_<command>.json`` recording the resolved configuration and the
digests of inputs and outputs.  ``cpgnn replay <manifest>`` re-executes it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .cluster_eval import evaluate, kmeans
from .config import ConfigError, RunConfig, build, load
from .hetgraph import GraphFormatError, HetGraph, load_graph, save_graph
from .model import forward, load_checkpoint
from .synth import planted_partition
from .train import TrainingDiverged, train

log = logging.getLogger("cpgnn")

CHECKPOINT = "checkpoint.npz"
HISTORY = "history.csv"
ASSIGNMENTS = "assignments.tsv"
METRICS = "metrics.json"
ATTENTION_DIR = "attention"


class CliError(Exception):
    pass


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _absolute(cfg: RunConfig) -> RunConfig:
    d = cfg.data
    fix = lambda p: os.path.abspath(p) if p else p  # noqa: E731
    return replace(cfg, data=replace(d, nodes=fix(d.nodes), edges=fix(d.edges),
                                     labels=fix(d.labels), split=fix(d.split)))


def _load_graph(cfg: RunConfig, need_labels: bool = False) -> HetGraph:
    d = cfg.data
    if not d.nodes or not d.edges:
        raise CliError("data.nodes and data.edges must be set (config file or --set)")
    if need_labels and not d.labels:
        raise CliError("labels required: set data.labels to a labels TSV")
    for p in (d.nodes, d.edges, d.labels):
        if p and not os.path.exists(p):
            raise CliError(f"input file not found: {p}")
    return load_graph(d.nodes, d.edges, d.labels, d.primary_type)


def _inputs(cfg: RunConfig, *extra: str) -> list[str]:
    d = cfg.data
    return [p for p in (d.nodes, d.edges, d.labels, d.split, *extra) if p]


def _write_manifest(out_dir: str, command: str, cfg: RunConfig, inputs: list[str],
                    outputs: list[str]) -> str:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {s: cfg.to_dict()[s]["seed"] for s in ("model", "sampler", "train", "cluster", "synth")},
        "inputs": {p: _digest(p) for p in inputs},
        "outputs": {os.path.relpath(p, out_dir): _digest(p) for p in outputs},
    }
    path = os.path.join(out_dir, f"manifest_{command.replace('-', '_')}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _checkpoint(out_dir: str, override: str | None) -> str:
    path = override or os.path.join(out_dir, CHECKPOINT)
    if not os.path.exists(path):
        raise CliError(f"checkpoint not found: {path} (run `cpgnn train` first)")
    return path


# -- commands -----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out_dir: str, args) -> tuple[list[str], list[str]]:
    g = planted_partition(cfg.synth)
    paths = [os.path.join(out_dir, f) for f in ("nodes.tsv", "edges.tsv", "labels.tsv")]
    save_graph(g, *paths)
    return [], paths


def cmd_train(cfg: RunConfig, out_dir: str, args) -> tuple[list[str], list[str]]:
    g = _load_graph(cfg)
    ckpt = os.path.join(out_dir, CHECKPOINT)
    tcfg = replace(cfg.train, checkpoint_path=ckpt)
    try:
        _, history = train(g, cfg.model, cfg.sampler, tcfg)
    except TrainingDiverged as exc:
        raise CliError(f"training diverged: {exc}; last good parameters saved to {ckpt}") from None
    hist = os.path.join(out_dir, HISTORY)
    history.write_csv(hist)
    return _inputs(cfg), [ckpt, hist]


def _cluster(cfg: RunConfig, g: HetGraph, ckpt: str) -> np.ndarray:
    params, _, _ = load_checkpoint(ckpt)
    z = params.embeddings
    if z.shape[0] != g.num_primary:
        raise CliError(f"checkpoint has {z.shape[0]} embeddings but graph has {g.num_primary} primary nodes")
    c = cfg.cluster.n_clusters
    if c is None:
        if g.labels is None or not (g.labels >= 0).any():
            raise CliError("cluster.n_clusters not set and no labels to infer it from")
        c = len(np.unique(g.labels[g.labels >= 0]))
    return kmeans(z, c, cfg.cluster.restarts, cfg.cluster.max_iter, cfg.cluster.seed).assignments


def cmd_cluster(cfg: RunConfig, out_dir: str, args) -> tuple[list[str], list[str]]:
    g = _load_graph(cfg)
    ckpt = _checkpoint(out_dir, args.checkpoint)
    assign = _cluster(cfg, g, ckpt)
    path = os.path.join(out_dir, ASSIGNMENTS)
    names = g.node_names[g.primary_type]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, c in zip(names, assign):
            fh.write(f"{name}\t{int(c)}\n")
    return _inputs(cfg, ckpt), [path]


def _read_split(path: str, g: HetGraph) -> np.ndarray:
    index = {n: i for i, n in enumerate(g.node_names[g.primary_type])}
    keep = np.zeros(g.num_primary, dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            name = raw.strip().split("\t")[0]
            if not name or name.startswith("#"):
                continue
            if name not in index:
                raise CliError(f"{path}:{lineno}: {name!r} is not a primary node")
            keep[index[name]] = True
    return keep


def cmd_eval(cfg: RunConfig, out_dir: str, args) -> tuple[list[str], list[str]]:
    g = _load_graph(cfg, need_labels=True)
    ckpt = _checkpoint(out_dir, args.checkpoint)
    assign = _cluster(cfg, g, ckpt)
    mask = g.labels >= 0
    if cfg.cluster.use_split:
        if not cfg.data.split:
            raise CliError("cluster.use_split is set but data.split is empty")
        mask &= _read_split(cfg.data.split, g)
    if not mask.any():
        raise CliError("no labeled nodes to evaluate")
    metrics = evaluate(assign[mask], g.labels[mask])
    metrics["evaluated_nodes"] = int(mask.sum())
    path = os.path.join(out_dir, METRICS)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return _inputs(cfg, ckpt), [path]


def cmd_dump_attention(cfg: RunConfig, out_dir: str, args) -> tuple[list[str], list[str]]:
    g = _load_graph(cfg)
    ckpt = _checkpoint(out_dir, args.checkpoint)
    params, mcfg, _ = load_checkpoint(ckpt)
    report = forward(g, params, mcfg).attention
    written = report.write_csv(os.path.join(out_dir, ATTENTION_DIR))
    return _inputs(cfg, ckpt), written


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "cluster": cmd_cluster,
    "eval": cmd_eval,
    "dump-attention": cmd_dump_attention,
}


def run(command: str, cfg: RunConfig, out_dir: str, args) -> str:
    os.makedirs(out_dir, exist_ok=True)
    cfg = _absolute(cfg)
    inputs, outputs = COMMANDS[command](cfg, out_dir, args)
    for p in outputs:
        if not os.path.exists(p):
            raise CliError(f"expected output missing: {p}")
    return _write_manifest(out_dir, command, cfg, inputs, outputs)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file with [section] headers")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="seed for every stochastic component")
    common.add_argument("--out-dir", default="run", help="run directory (default: ./run)")
    common.add_argument("--checkpoint", help="checkpoint path (default: <out-dir>/checkpoint.npz)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cpgnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    help_ = {
        "synth": "write a planted-partition graph (nodes/edges/labels TSV)",
        "train": "train CP-GNN; writes checkpoint.npz and history.csv",
        "cluster": "k-means on trained embeddings; writes assignments.tsv",
        "eval": "cluster and score against labels; writes metrics.json",
        "dump-attention": "export relation and length attention as CSV",
    }
    for name, text in help_.items():
        sub.add_parser(name, parents=[common], help=text)
    rp = sub.add_parser("replay", help="re-run a command from its manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out-dir", help="run directory (default: the manifest's directory)")
    rp.add_argument("--checkpoint")
    rp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            with open(args.manifest, encoding="utf-8") as fh:
                manifest = json.load(fh)
            cfg = build(manifest["config"])
            for path, digest in manifest.get("inputs", {}).items():
                if not os.path.exists(path):
                    raise CliError(f"manifest input missing: {path}")
                if _digest(path) != digest:
                    raise CliError(f"manifest input changed since the recorded run: {path}")
            out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.manifest))
            path = run(manifest["command"], cfg, out_dir, args)
        else:
            cfg = load(args.config, args.overrides, args.seed)
            path = run(args.command, cfg, args.out_dir, args)
    except (CliError, ConfigError, GraphFormatError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"cpgnn: error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
