"""Two-margin structure-aware objective, analytic gradients, AdamW and the epoch loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import TrainingExample
from .encoder import (
    NORM_EPS,
    DualEncoder,
    EncoderConfig,
    cosine,
    save_checkpoint,
    serialize_triplet,
    token_buckets,
)
from .errors import DegenerateEmbeddingError, EmptyDatasetError, EmptyTextError, NotInGraphError
from .kg import KnowledgeGraph
from .rng import RngState, check_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginConfig:
    gamma1: float = 0.5
    gamma2: float = 0.5

    def __post_init__(self) -> None:
        for name in ("gamma1", "gamma2"):
            g = getattr(self, name)
            if not math.isfinite(g) or g < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {g}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 512
    shuffle_seed: int = 0
    checkpoint_every: int = 0  # epochs between intermediate checkpoints; 0 = final only
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    sparse: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        check_seed(self.shuffle_seed)


def margin_loss(p: np.ndarray, n: np.ndarray, q: np.ndarray, gamma: float) -> float:
    """Hinge ``max(0, gamma + cos(n, q) - cos(p, q))``."""
    return max(0.0, gamma + cosine(n, q) - cosine(p, q))


def total_loss(z_tau, z_nb, z_neg, z_q, margins: MarginConfig = MarginConfig()) -> float:
    return margin_loss(z_tau, z_nb, z_q, margins.gamma1) + margin_loss(z_nb, z_neg, z_q, margins.gamma2)


@dataclass
class SparseGrad:
    """Gradient restricted to ``rows`` of a table (``rows`` sorted, unique)."""

    rows: np.ndarray
    values: np.ndarray

    def to_dense(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape)
        out[self.rows] = self.values
        return out


@dataclass
class EncodedBatch:
    """Token buckets per role, flattened with per-example lengths."""

    query: list[np.ndarray]
    positive: list[np.ndarray]
    neighbor: list[np.ndarray]
    negative: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.query)

    def subset(self, idx: Sequence[int]) -> "EncodedBatch":
        return EncodedBatch(
            [self.query[i] for i in idx],
            [self.positive[i] for i in idx],
            [self.neighbor[i] for i in idx],
            [self.negative[i] for i in idx],
        )


def encode_examples(examples: Sequence[TrainingExample], graph: KnowledgeGraph, model: DualEncoder) -> EncodedBatch:
    """Resolve ids and hash every text once; fails on unresolvable ids or empty texts."""
    vq, vt = model.query.buckets, model.triplet.buckets
    n = len(graph.triplets)
    cache: dict[int, np.ndarray] = {}

    def trip(tid: int, i: int) -> np.ndarray:
        if not 0 <= tid < n:
            raise NotInGraphError(f"example {i}: triplet id {tid} not in graph of {n} triplets")
        if tid not in cache:
            cache[tid] = token_buckets(serialize_triplet(graph.triplets[tid]), vt)
            if cache[tid].size == 0:
                raise EmptyTextError(f"triplet {tid} has no tokens")
        return cache[tid]

    batch = EncodedBatch([], [], [], [])
    for i, ex in enumerate(examples):
        qb = token_buckets(ex.question.text, vq)
        if qb.size == 0:
            raise EmptyTextError(f"example {i}: question has no tokens")
        batch.query.append(qb)
        batch.positive.append(trip(ex.positive_id, i))
        batch.neighbor.append(trip(ex.neighbor_id, i))
        batch.negative.append(trip(ex.negative_id, i))
    return batch


def _segments(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    flat = np.concatenate(seqs)
    seg = np.repeat(np.arange(len(seqs)), lengths)
    return flat, seg, lengths


def _pool(table: np.ndarray, seqs: list[np.ndarray]):
    flat, seg, lengths = _segments(seqs)
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    z = np.add.reduceat(table[flat], starts, axis=0) / lengths[:, None]
    return z, (flat, seg, lengths)


def _unpool(grad_z: np.ndarray, seginfo) -> tuple[np.ndarray, np.ndarray]:
    flat, seg, lengths = seginfo
    return flat, grad_z[seg] / lengths[seg, None]


def _accumulate(parts: list[tuple[np.ndarray, np.ndarray]], dim: int) -> SparseGrad:
    flat = np.concatenate([p[0] for p in parts])
    vals = np.concatenate([p[1] for p in parts])
    rows, inv = np.unique(flat, return_inverse=True)
    out = np.zeros((len(rows), dim))
    np.add.at(out, inv, vals)
    return SparseGrad(rows, out)


def _cos_and_grads(a: np.ndarray, q: np.ndarray, na: np.ndarray, nq: np.ndarray):
    """Row-wise cos(a, q) and its gradients with respect to a and q."""
    dot = np.einsum("ij,ij->i", a, q)
    c = dot / (na * nq)
    da = q / (na * nq)[:, None] - (c / na**2)[:, None] * a
    dq = a / (na * nq)[:, None] - (c / nq**2)[:, None] * q
    return c, da, dq


def batch_loss_and_grads(
    batch: EncodedBatch, model: DualEncoder, margins: MarginConfig, offset: int = 0
) -> tuple[float, np.ndarray, SparseGrad, SparseGrad]:
    """Mean loss over the batch, per-example losses, and sparse table gradients.

    ``offset`` is added to example indices in degenerate-embedding errors.
    """
    B = len(batch)
    zq, sq = _pool(model.query.table, batch.query)
    zt, st = _pool(model.triplet.table, batch.positive)
    zn, sn = _pool(model.triplet.table, batch.neighbor)
    zg, sg = _pool(model.triplet.table, batch.negative)

    norms = [np.linalg.norm(z, axis=1) for z in (zq, zt, zn, zg)]
    bad = np.flatnonzero(np.any(np.stack(norms) <= NORM_EPS, axis=0))
    if bad.size:
        raise DegenerateEmbeddingError(f"example {int(bad[0]) + offset}: near-zero-norm embedding")
    nq, nt, nn, ng = norms

    c_t, dt_a, dt_q = _cos_and_grads(zt, zq, nt, nq)
    c_n, dn_a, dn_q = _cos_and_grads(zn, zq, nn, nq)
    c_g, dg_a, dg_q = _cos_and_grads(zg, zq, ng, nq)

    h1 = margins.gamma1 + c_n - c_t
    h2 = margins.gamma2 + c_g - c_n
    losses = np.maximum(h1, 0.0) + np.maximum(h2, 0.0)
    # subgradient 0 at the kink
    a1 = (h1 > 0).astype(np.float64)[:, None] / B
    a2 = (h2 > 0).astype(np.float64)[:, None] / B

    g_t = -a1 * dt_a
    g_n = (a1 - a2) * dn_a
    g_g = a2 * dg_a
    g_q = a1 * (dn_q - dt_q) + a2 * (dg_q - dn_q)

    d = model.triplet.dim
    grad_q = _accumulate([_unpool(g_q, sq)], model.query.dim)
    grad_t = _accumulate([_unpool(g_t, st), _unpool(g_n, sn), _unpool(g_g, sg)], d)
    return float(losses.mean()), losses, grad_q, grad_t


def backward(
    example: TrainingExample, graph: KnowledgeGraph, model: DualEncoder, margins: MarginConfig = MarginConfig()
) -> tuple[float, SparseGrad, SparseGrad]:
    """Loss of one example and its gradients for the (query, triplet) tables."""
    batch = encode_examples([example], graph, model)
    loss, _, gq, gt = batch_loss_and_grads(batch, model, margins)
    return loss, gq, gt


@dataclass
class OptimizerState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    sparse: bool = True
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "OptimizerState":
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, cfg.sparse)


def adamw_step(params: list[np.ndarray], grads: list, state: OptimizerState):
    """One in-place AdamW update with decoupled weight decay.

    ``grads`` entries are dense arrays or :class:`SparseGrad`. In sparse mode
    only rows carrying a nonzero gradient have their moments, decay and value
    updated; dense mode touches every row.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if [m.shape for m in state.m] != [p.shape for p in params]:
        raise ValueError("optimizer state shapes do not match parameters")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step

    for p, g, m, v in zip(params, grads, state.m, state.v):
        if isinstance(g, SparseGrad):
            if g.values.shape[1:] != p.shape[1:] or (g.rows.size and g.rows.max() >= p.shape[0]):
                raise ValueError("sparse gradient does not fit its parameter")
            if state.sparse:
                keep = np.any(g.values != 0, axis=1)
                rows, gv = g.rows[keep], g.values[keep]
            else:
                rows, gv = slice(None), g.to_dense(p.shape)
        else:
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if state.sparse and p.ndim == 2:
                rows = np.flatnonzero(np.any(g != 0, axis=1))
                gv = g[rows]
            elif state.sparse:
                rows = np.flatnonzero(g != 0)
                gv = g[rows]
            else:
                rows, gv = slice(None), g

        m[rows] = b1 * m[rows] + (1.0 - b1) * gv
        v[rows] = b2 * v[rows] + (1.0 - b2) * gv * gv
        pr = p[rows]
        if state.weight_decay:
            pr = pr - state.lr * state.weight_decay * pr
        p[rows] = pr - state.lr * (m[rows] / bc1) / (np.sqrt(v[rows] / bc2) + state.eps)
    return params, state


@dataclass
class TrainResult:
    model: DualEncoder
    loss_curve: list[tuple[int, int, float]]
    steps: int


def train(
    dataset: Sequence[TrainingExample],
    graph: KnowledgeGraph,
    encoder_config: EncoderConfig | None = None,
    train_config: TrainConfig | None = None,
    margins: MarginConfig | None = None,
    seed: int = 0,
    init: DualEncoder | None = None,
    out: str | Path | None = None,
    metadata: dict | None = None,
) -> TrainResult:
    """Pretrain both towers on ``dataset``.

    Towers start from ``init`` (copied) or from a fresh seeded
    initialisation. When ``out`` is given the final checkpoint is written
    there, plus ``{out}.epoch{N}`` every ``checkpoint_every`` epochs.
    """
    encoder_config = encoder_config or EncoderConfig()
    train_config = train_config or TrainConfig()
    margins = margins or MarginConfig()
    if not dataset:
        raise EmptyDatasetError("cannot train on an empty dataset")
    model = init.copy() if init is not None else DualEncoder.init(encoder_config, seed)

    encoded = encode_examples(dataset, graph, model)
    state = OptimizerState.from_config(train_config)
    rng = RngState(train_config.shuffle_seed)
    params = [model.query.table, model.triplet.table]
    curve: list[tuple[int, int, float]] = []
    order = list(range(len(dataset)))
    bs = train_config.batch_size
    meta = {
        "train_config": asdict(train_config),
        "margins": asdict(margins),
        "examples": len(dataset),
        **(metadata or {}),
    }

    for epoch in range(1, train_config.epochs + 1):
        rng.shuffle(order)
        for b, start in enumerate(range(0, len(order), bs), start=1):
            idx = order[start:start + bs]
            loss, _, gq, gt = batch_loss_and_grads(encoded.subset(idx), model, margins)
            adamw_step(params, [gq, gt], state)
            curve.append((epoch, b, loss))
        log.info("epoch %d: last batch loss %.4f", epoch, curve[-1][2])
        model.changed()
        if out is not None and train_config.checkpoint_every and epoch % train_config.checkpoint_every == 0:
            if epoch != train_config.epochs:
                save_checkpoint(model, f"{out}.epoch{epoch}", {**meta, "epoch": epoch})
    model.changed()
    if out is not None:
        save_checkpoint(model, out, {**meta, "epoch": train_config.epochs, "steps": state.step})
    return TrainResult(model, curve, state.step)


def write_loss_curve(curve: Sequence[tuple[int, int, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "batch", "mean_loss"])
        for epoch, batch, loss in curve:
            w.writerow([epoch, batch, repr(float(loss))])
