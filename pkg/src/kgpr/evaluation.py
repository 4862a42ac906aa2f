"""Held-out retrieval metrics, preference-ordering statistics and the K-sweep."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import TrainingExample
from .encoder import DualEncoder, cosine, encode_question, encode_triplet
from .errors import DegenerateEmbeddingError, EmptyDatasetError
from .kg import KnowledgeGraph
from .retrieval import TripletIndex, rank_order, score_all
from .rng import RngState

DEFAULT_K_LIST = (1, 2, 5, 10, 20, 40)


def split_dataset(
    examples: Sequence[TrainingExample], holdout_fraction: float, rng: RngState
) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """Split by source triplet so no triplet's questions straddle the split."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    if len(examples) < 2:
        raise EmptyDatasetError("need at least 2 examples to split")
    groups = sorted({ex.question.source_triplet_id for ex in examples})
    rng.shuffle(groups)
    n_held = round(len(groups) * holdout_fraction)
    held = set(groups[:n_held])
    train = [ex for ex in examples if ex.question.source_triplet_id not in held]
    heldout = [ex for ex in examples if ex.question.source_triplet_id in held]
    if not train or not heldout:
        raise EmptyDatasetError(
            f"split of {len(groups)} source triplets at fraction {holdout_fraction} leaves a side empty"
        )
    return train, heldout


@dataclass
class OrderingStats:
    exact: float
    neighbor: float
    negative: float
    skipped: int = 0


@dataclass
class EvalReport:
    recall_at_k: dict[int, float]
    mrr: float
    neighbor_recall_at_k: dict[int, float]
    ordering_stats: OrderingStats
    questions: int
    examples: int
    note: str = field(
        default="retrieval-level metrics only; LLM question-answering metrics are not computed"
    )

    def to_dict(self) -> dict:
        return {
            "recall_at_k": {str(k): v for k, v in self.recall_at_k.items()},
            "mrr": self.mrr,
            "neighbor_recall_at_k": {str(k): v for k, v in self.neighbor_recall_at_k.items()},
            "ordering_stats": {
                "mean_cos_exact": self.ordering_stats.exact,
                "mean_cos_neighbor": self.ordering_stats.neighbor,
                "mean_cos_negative": self.ordering_stats.negative,
                "skipped": self.ordering_stats.skipped,
            },
            "questions": self.questions,
            "examples": self.examples,
            "note": self.note,
        }


def _unique_questions(heldout: Sequence[TrainingExample]) -> list[tuple[str, int]]:
    seen: dict[tuple[str, int, str], None] = {}
    for ex in heldout:
        q = ex.question
        seen.setdefault((q.text, q.source_triplet_id, q.masked_slot.value), None)
    return [(text, tid) for text, tid, _ in seen]


def evaluate(
    index: TripletIndex,
    model: DualEncoder,
    graph: KnowledgeGraph,
    heldout: Sequence[TrainingExample],
    k_list: Sequence[int] = DEFAULT_K_LIST,
) -> EvalReport:
    """Recall@K, neighbor-recall@K and MRR over distinct held-out questions.

    A question whose source triplet is unretrievable gets reciprocal rank 0.
    """
    if not heldout:
        raise EmptyDatasetError("held-out set is empty")
    k_list = [int(k) for k in k_list]
    if not k_list or any(k < 1 for k in k_list) or k_list != sorted(k_list):
        raise ValueError("k_list must be a non-empty ascending list of positive integers")

    questions = _unique_questions(heldout)
    hits = {k: 0 for k in k_list}
    nb_frac = {k: 0.0 for k in k_list}
    rr = 0.0
    for text, source in questions:
        order = rank_order(score_all(index, model, text))
        pos = np.flatnonzero(order == source)
        if pos.size:
            rr += 1.0 / (int(pos[0]) + 1)
        src_entities = graph.triplets[source].entities
        related = np.fromiter(
            (bool(graph.triplets[i].entities & src_entities) for i in order[: k_list[-1]]),
            dtype=bool,
            count=min(k_list[-1], order.size),
        )
        for k in k_list:
            if pos.size and pos[0] < k:
                hits[k] += 1
            top = related[:k]
            nb_frac[k] += float(top.mean()) if top.size else 0.0

    n = len(questions)
    return EvalReport(
        recall_at_k={k: hits[k] / n for k in k_list},
        mrr=rr / n,
        neighbor_recall_at_k={k: nb_frac[k] / n for k in k_list},
        ordering_stats=ordering_stats(model, graph, heldout),
        questions=n,
        examples=len(heldout),
    )


def ordering_stats(model: DualEncoder, graph: KnowledgeGraph, examples: Sequence[TrainingExample]) -> OrderingStats:
    """Mean cosine of each question against its exact, neighbor and negative triplet.

    Examples with a degenerate embedding are left out and counted in ``skipped``.
    """
    sums = np.zeros(3)
    used = 0
    for ex in examples:
        try:
            zq = encode_question(model.query, ex.question)
            cos = [
                cosine(encode_triplet(model.triplet, graph.triplets[tid]), zq)
                for tid in (ex.positive_id, ex.neighbor_id, ex.negative_id)
            ]
        except DegenerateEmbeddingError:
            continue
        sums += cos
        used += 1
    means = sums / used if used else np.full(3, np.nan)
    return OrderingStats(*(float(x) for x in means), skipped=len(examples) - used)


def k_sweep(
    index: TripletIndex,
    model: DualEncoder,
    graph: KnowledgeGraph,
    heldout: Sequence[TrainingExample],
    k_list: Sequence[int] = DEFAULT_K_LIST,
) -> list[tuple[int, float, float]]:
    report = evaluate(index, model, graph, heldout, k_list)
    return sweep_rows(report)


def sweep_rows(report: EvalReport) -> list[tuple[int, float, float]]:
    return [(k, report.recall_at_k[k], report.neighbor_recall_at_k[k]) for k in report.recall_at_k]


def sweep_csv(rows: Sequence[tuple[int, float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "recall", "neighbor_recall"])
    for k, r, nr in rows:
        w.writerow([k, repr(r), repr(nr)])
    return buf.getvalue()
