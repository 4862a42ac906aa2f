"""Finite-difference gradient oracle, independent of the batched backward pass."""

from __future__ import annotations

import numpy as np

from kgpr.encoder import cosine, encode, serialize_triplet, token_buckets
from kgpr.training import MarginConfig


def hinge_inputs(model, graph, ex, margins=MarginConfig()):
    zq = encode(model.query, ex.question.text)
    zt, zn, zg = (encode(model.triplet, serialize_triplet(graph[i])) for i in (ex.positive_id, ex.neighbor_id, ex.negative_id))
    return np.array([
        margins.gamma1 + cosine(zn, zq) - cosine(zt, zq),
        margins.gamma2 + cosine(zg, zq) - cosine(zn, zq),
    ])


def loss_of(pre: np.ndarray) -> float:
    return float(np.maximum(pre, 0.0).sum())


def touched(model, graph, ex):
    """(table, rows) pairs for every embedding row the example reads."""
    q_rows = sorted(set(token_buckets(ex.question.text, model.query.buckets).tolist()))
    t_rows = sorted(
        {
            int(b)
            for i in (ex.positive_id, ex.neighbor_id, ex.negative_id)
            for b in token_buckets(serialize_triplet(graph[i]), model.triplet.buckets)
        }
    )
    return [(model.query.table, q_rows, 0), (model.triplet.table, t_rows, 1)]


def central_diff(model, graph, ex, table, r, c, h):
    """Central difference of the loss for one entry; also reports kink crossings."""
    old = table[r, c]
    table[r, c] = old + h
    plus = hinge_inputs(model, graph, ex)
    table[r, c] = old - h
    minus = hinge_inputs(model, graph, ex)
    table[r, c] = old
    return (loss_of(plus) - loss_of(minus)) / (2 * h), plus, minus


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b))
