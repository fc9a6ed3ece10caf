"""Full-batch Adam training of CP-GNN."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .hetgraph import HetGraph
from .model import CpGnnParams, ModelConfig, forward, init_params, loss, save_checkpoint
from .ndiff import Tape, backward
from .sampler import SamplerConfig, sample_context_set

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, last_good: CpGnnParams | None = None) -> None:
        super().__init__(msg)
        self.last_good = last_good


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    resample_every: int = 1
    seed: int = 0
    clip_grad_norm: float | None = None
    checkpoint_path: str | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.resample_every < 1:
            raise ValueError("resample_every must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: CpGnnParams, grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig, frozen: frozenset[str] = frozenset()) -> None:
    """In-place bias-corrected Adam update of every non-frozen parameter."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        if name in frozen:
            continue
        p = params.arrays[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    alphas: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)

    def write_csv(self, path: str | os.PathLike) -> None:
        K = len(self.alphas[0]) - 1 if self.alphas else 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["epoch", "loss"] + [f"alpha_{k}" for k in range(K + 1)])
            for e, (l, a) in enumerate(zip(self.loss, self.alphas), 1):
                out.writerow([e, repr(l)] + [repr(float(x)) for x in a])


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        for g in grads.values():
            g *= max_norm / total


def frozen_parameters(cfg: ModelConfig) -> frozenset[str]:
    return frozenset() if cfg.length_attention else frozenset({"length_logits"})


def train(g: HetGraph, mcfg: ModelConfig, scfg: SamplerConfig, tcfg: TrainConfig,
          params: CpGnnParams | None = None) -> tuple[CpGnnParams, History]:
    if scfg.max_length != mcfg.max_length:
        raise ValueError(f"sampler K={scfg.max_length} differs from model K={mcfg.max_length}")
    params = params.copy() if params is not None else init_params(g, mcfg)
    state = AdamState()
    history = History()
    frozen = frozen_parameters(mcfg)
    samples = None
    last_good = params.copy()
    for epoch in range(tcfg.epochs):
        if epoch % tcfg.resample_every == 0:
            samples = sample_context_set(g, scfg, draw=epoch // tcfg.resample_every)
        rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed & (2**64 - 1), epoch]))
        tape = Tape()
        try:
            out = forward(g, params, mcfg, training=True, rng=rng, tape=tape)
            value = loss(tape, samples, out.contexts, out.weights["Z_P"], out.weights["length_logits"])
            grads = backward(tape, value)
            if tcfg.clip_grad_norm is not None:
                _clip(grads, tcfg.clip_grad_norm)
            adam_step(params, grads, state, tcfg, frozen)
        except FloatingPointError as exc:
            _save_last_good(last_good, mcfg, tcfg)
            raise TrainingDiverged(f"epoch {epoch + 1}: {exc}", last_good) from exc
        except TrainingDiverged as exc:
            _save_last_good(last_good, mcfg, tcfg)
            raise TrainingDiverged(f"epoch {epoch + 1}: {exc}", last_good) from exc
        if not all(np.all(np.isfinite(a)) for a in params.arrays.values()):
            _save_last_good(last_good, mcfg, tcfg)
            raise TrainingDiverged(f"epoch {epoch + 1}: parameters became non-finite", last_good)
        history.loss.append(value.item())
        history.alphas.append(out.attention.length.copy())
        last_good = params.copy()
        log.debug("epoch %d loss %.6f", epoch + 1, history.loss[-1])
    if tcfg.checkpoint_path:
        save_checkpoint(tcfg.checkpoint_path, params, mcfg)
    return params, history


def _save_last_good(params: CpGnnParams, mcfg: ModelConfig, tcfg: TrainConfig) -> None:
    if tcfg.checkpoint_path:
        save_checkpoint(tcfg.checkpoint_path, params, mcfg, extra={"diverged": True})


def with_length(scfg: SamplerConfig, mcfg: ModelConfig) -> SamplerConfig:
    return replace(scfg, max_length=mcfg.max_length)
