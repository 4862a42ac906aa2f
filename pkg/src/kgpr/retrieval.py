"""Exhaustive top-K triplet retrieval over a precomputed triplet-tower index."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import NORM_EPS, DualEncoder, encode, encode_question, encode_triplet, serialize_triplet
from .errors import CheckpointError, DegenerateEmbeddingError, FingerprintMismatchError, KGPRError
from .kg import KnowledgeGraph, Triplet

INDEX_MAGIC = b"GPRI"


@dataclass
class TripletIndex:
    rows: np.ndarray  # (n, d) triplet-tower embeddings
    norms: np.ndarray
    fingerprint: str
    graph: KnowledgeGraph | None = None

    @property
    def retrievable(self) -> np.ndarray:
        return self.norms > NORM_EPS

    def __len__(self) -> int:
        return self.rows.shape[0]

    def to_bytes(self) -> bytes:
        n, d = self.rows.shape
        return (
            INDEX_MAGIC
            + struct.pack("<2I", n, d)
            + self.norms.astype("<f4").tobytes()
            + self.rows.astype("<f4").tobytes()
            + struct.pack("<Q", int(self.fingerprint, 16))
        )

    @classmethod
    def from_bytes(cls, data: bytes, graph: KnowledgeGraph | None = None) -> "TripletIndex":
        if len(data) < 12 or data[:4] != INDEX_MAGIC:
            raise CheckpointError("not an index file (bad magic)")
        n, d = struct.unpack_from("<2I", data, 4)
        if len(data) != 12 + 4 * n + 4 * n * d + 8:
            raise CheckpointError("index size does not match its header")
        norms = np.frombuffer(data, dtype="<f4", count=n, offset=12).astype(np.float64)
        rows = np.frombuffer(data, dtype="<f4", count=n * d, offset=12 + 4 * n).astype(np.float64)
        (fp,) = struct.unpack_from("<Q", data, len(data) - 8)
        if graph is not None and len(graph) != n:
            raise KGPRError(f"index has {n} rows but graph has {len(graph)} triplets")
        return cls(rows.reshape(n, d), norms, f"{fp:016x}", graph)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path, graph: KnowledgeGraph | None = None) -> "TripletIndex":
        return cls.from_bytes(Path(path).read_bytes(), graph)


@dataclass(frozen=True)
class RetrievalResult:
    entries: tuple[tuple[int, float], ...]

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def build_index(graph: KnowledgeGraph, model: DualEncoder) -> TripletIndex:
    if not len(graph):
        raise KGPRError("cannot index an empty graph")
    rows = np.stack([encode_triplet(model.triplet, t) for t in graph.triplets])
    norms = np.linalg.norm(rows, axis=1)
    if not np.any(norms > NORM_EPS):
        raise DegenerateEmbeddingError("every triplet embedding is degenerate")
    return TripletIndex(rows, norms, model.fingerprint(), graph)


def _check_fingerprint(index: TripletIndex, model: DualEncoder) -> None:
    if index.fingerprint != model.fingerprint():
        raise FingerprintMismatchError(
            f"index built from checkpoint {index.fingerprint}, queried with {model.fingerprint()}"
        )


def score_all(index: TripletIndex, model: DualEncoder, question: str) -> np.ndarray:
    """Cosine of the question against every row; ``nan`` for unretrievable rows."""
    _check_fingerprint(index, model)
    zq = encode_question(model.query, question)
    nq = float(np.linalg.norm(zq))
    if nq <= NORM_EPS:
        raise DegenerateEmbeddingError(f"question {question!r} encodes to a near-zero vector")
    ok = index.retrievable
    scores = np.full(len(index), np.nan)
    scores[ok] = np.clip(index.rows[ok] @ zq / (index.norms[ok] * nq), -1.0, 1.0)
    return scores


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Retrievable ids by score descending, ties by ascending id."""
    ok = np.flatnonzero(~np.isnan(scores))
    return ok[np.lexsort((ok, -scores[ok]))]


def retrieve_topk(index: TripletIndex, model: DualEncoder, question: str, k: int = 10) -> RetrievalResult:
    if k < 1:
        raise ValueError("K must be >= 1")
    scores = score_all(index, model, question)
    ok = np.flatnonzero(~np.isnan(scores))
    if k < ok.size:
        # partial selection, then exact ordering of the survivors and any boundary ties
        kth = np.partition(-scores[ok], k - 1)[k - 1]
        ok = ok[-scores[ok] <= kth]
    top = ok[np.lexsort((ok, -scores[ok]))][:k]
    return RetrievalResult(tuple((int(i), float(scores[i])) for i in top))


def retrieve_on_the_fly(graph: KnowledgeGraph, model: DualEncoder, question: str, k: int = 10) -> RetrievalResult:
    """Index-free reference: encode every triplet on demand and sort all scores."""
    zq = encode_question(model.query, question)
    scored = []
    for t in graph.triplets:
        z = encode(model.triplet, serialize_triplet(t))
        na, nq = np.linalg.norm(z), np.linalg.norm(zq)
        if na <= NORM_EPS:
            continue
        scored.append((-min(1.0, max(-1.0, float(z @ zq / (na * nq)))), t.id))
    scored.sort()
    return RetrievalResult(tuple((i, -s) for s, i in scored[:k]))


def assemble_subgraph(graph: KnowledgeGraph, result: RetrievalResult) -> list[Triplet]:
    out = []
    for tid, _ in result.entries:
        if not 0 <= tid < len(graph):
            raise KGPRError(f"result id {tid} not in graph; index and graph do not match")
        out.append(graph.triplets[tid])
    return out


def render_subgraph(triplets: list[Triplet]) -> str:
    return "".join(serialize_triplet(t) + "\n" for t in triplets)
