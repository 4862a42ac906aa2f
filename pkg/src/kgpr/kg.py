"""Knowledge-graph storage, TSV ingestion and structural sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import EmptyGraphError, GraphFormatError, InfeasibleError, NotInGraphError
from .rng import RngState

log = logging.getLogger(__name__)

NEGATIVE_ATTEMPTS = 100


@dataclass(frozen=True)
class Triplet:
    id: int
    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        for name in ("head", "relation", "tail"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"triplet {name} must be a non-empty string")

    @property
    def entities(self) -> frozenset[str]:
        return frozenset((self.head, self.tail))

    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)

    def shares_entity(self, other: "Triplet") -> bool:
        return bool(self.entities & other.entities)


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable triplet store with an entity -> triplet-id index."""

    triplets: tuple[Triplet, ...]
    entity_index: dict[str, frozenset[int]] = field(repr=False)
    relation_count: int
    duplicates_dropped: int = 0

    @classmethod
    def from_tuples(cls, rows: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        seen: set[tuple[str, str, str]] = set()
        triplets: list[Triplet] = []
        dropped = 0
        for row in rows:
            row = tuple(row)
            if row in seen:
                dropped += 1
                continue
            seen.add(row)
            triplets.append(Triplet(len(triplets), *row))
        if not triplets:
            raise EmptyGraphError("graph has zero valid triplets")
        index: dict[str, set[int]] = {}
        for t in triplets:
            index.setdefault(t.head, set()).add(t.id)
            index.setdefault(t.tail, set()).add(t.id)
        if dropped:
            log.warning("dropped %d duplicate triplet(s)", dropped)
        return cls(
            triplets=tuple(triplets),
            entity_index={e: frozenset(ids) for e, ids in index.items()},
            relation_count=len({t.relation for t in triplets}),
            duplicates_dropped=dropped,
        )

    def __len__(self) -> int:
        return len(self.triplets)

    def __getitem__(self, i: int) -> Triplet:
        return self.triplets[i]

    @property
    def entity_count(self) -> int:
        return len(self.entity_index)

    def contains(self, t: Triplet) -> bool:
        return 0 <= t.id < len(self.triplets) and self.triplets[t.id] == t

    def _require(self, t: Triplet) -> None:
        if not self.contains(t):
            raise NotInGraphError(f"triplet {t!r} does not belong to this graph")


def load_graph(path: str | Path, format: str = "tsv") -> KnowledgeGraph:
    """Read a headerless ``head<TAB>relation<TAB>tail`` file."""
    if format != "tsv":
        raise ValueError(f"unsupported graph format {format!r}")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphFormatError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
            if not all(parts):
                raise GraphFormatError("empty field", lineno)
            rows.append((parts[0], parts[1], parts[2]))
    return KnowledgeGraph.from_tuples(rows)


def write_graph(g: KnowledgeGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in g.triplets:
            fh.write(f"{t.head}\t{t.relation}\t{t.tail}\n")


def neighbors(g: KnowledgeGraph, t: Triplet) -> set[int]:
    """Ids of triplets sharing a head or tail entity with ``t``, excluding ``t``."""
    g._require(t)
    out = set(g.entity_index[t.head]) | g.entity_index[t.tail]
    out.discard(t.id)
    return out


def sample_negative(g: KnowledgeGraph, t: Triplet, rng: RngState) -> Triplet | None:
    """Rejection-sample an entity-disjoint triplet; ``None`` after 100 misses."""
    g._require(t)
    n = len(g.triplets)
    for _ in range(NEGATIVE_ATTEMPTS):
        cand = g.triplets[rng.randbelow(n)]
        if not cand.shares_entity(t):
            return cand
    return None


def generate_synthetic_graph(entities: int, relations: int, triplets: int, rng: RngState) -> KnowledgeGraph:
    """Uniformly sample distinct (h, r, t) triplets with ``h != t``.

    Entities are named ``e0..e{n-1}`` and relations ``r0..r{m-1}``.
    """
    if entities < 1 or relations < 1 or triplets < 1:
        raise InfeasibleError("entity, relation and triplet counts must all be >= 1")
    capacity = entities * (entities - 1) * relations
    if triplets > capacity:
        raise InfeasibleError(
            f"{triplets} distinct triplets requested but only {capacity} exist "
            f"for {entities} entities and {relations} relations without self-loops"
        )
    if 2 * triplets > capacity:
        # dense regime: enumerate then sample, rejection would stall
        every = [
            (h, r, t)
            for h in range(entities)
            for r in range(relations)
            for t in range(entities)
            if h != t
        ]
        chosen = rng.sample(every, triplets)
    else:
        seen: set[tuple[int, int, int]] = set()
        chosen = []
        while len(chosen) < triplets:
            h = rng.randbelow(entities)
            t = rng.randbelow(entities - 1)
            if t >= h:
                t += 1
            r = rng.randbelow(relations)
            if (h, r, t) not in seen:
                seen.add((h, r, t))
                chosen.append((h, r, t))
    return KnowledgeGraph.from_tuples((f"e{h}", f"r{r}", f"e{t}") for h, r, t in chosen)
