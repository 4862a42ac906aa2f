"""Masked-triplet question synthesis and the (question, exact, neighbor, negative) dataset."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import EmptyDatasetError, GeneratorError, SchemaError
from .kg import KnowledgeGraph, Triplet, neighbors, sample_negative
from .rng import RngState

log = logging.getLogger(__name__)

MASK_TOKEN = "[MASK]"
_WORD_RE = re.compile(r"[^\W_]+")

DEFAULT_INSTRUCTION = (
    "You are given a fact from a knowledge graph written as 'head | relation | tail', "
    "where one entity has been replaced by [MASK]. Write one natural-language question "
    "whose answer is the masked entity. Reply with the question only, on a single line."
)


class MaskSlot(str, Enum):
    HEAD = "head"
    TAIL = "tail"


GENERATOR_KINDS = ("template", "external-llm")


@dataclass(frozen=True)
class MaskedTriplet:
    source: Triplet
    masked_slot: MaskSlot

    def render(self) -> str:
        t = self.source
        if self.masked_slot is MaskSlot.HEAD:
            return f"{MASK_TOKEN} | {t.relation} | {t.tail}"
        return f"{t.head} | {t.relation} | {MASK_TOKEN}"


@dataclass(frozen=True)
class SyntheticQuestion:
    text: str
    source_triplet_id: int
    masked_slot: MaskSlot
    generator: str = "template"

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("question text must be non-empty")
        if self.generator not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.generator!r}")


@dataclass(frozen=True)
class TrainingExample:
    question: SyntheticQuestion
    positive_id: int
    neighbor_id: int
    negative_id: int


@dataclass(frozen=True)
class LLMConfig:
    base_url: str
    model: str
    api_key_env: str = "KGPR_LLM_API_KEY"
    instruction: str = DEFAULT_INSTRUCTION
    timeout: float = 60.0
    max_in_flight: int = 4
    fallback_to_template: bool = False


@dataclass(frozen=True)
class QuestionGenerator:
    """Either the deterministic template generator or an OpenAI-compatible endpoint."""

    kind: str = "template"
    llm: LLMConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "external-llm" and self.llm is None:
            raise ValueError("external-llm generator needs an LLMConfig")

    @classmethod
    def template(cls) -> "QuestionGenerator":
        return cls("template")

    @classmethod
    def external_llm(cls, config: LLMConfig) -> "QuestionGenerator":
        return cls("external-llm", config)


@dataclass
class DatasetConfig:
    neighbors_per_question: int = 1
    negatives_per_question: int = 1
    mask_slots: tuple[MaskSlot, ...] = (MaskSlot.HEAD, MaskSlot.TAIL)
    triplet_cap: int | None = None

    def __post_init__(self) -> None:
        if self.neighbors_per_question < 1 or self.negatives_per_question < 1:
            raise ValueError("neighbors/negatives per question must be >= 1")
        slots = {MaskSlot(s) for s in self.mask_slots}
        if not slots:
            raise ValueError("at least one mask slot is required")
        # fixed order keeps output independent of how the caller listed slots
        self.mask_slots = tuple(s for s in MaskSlot if s in slots)
        if self.triplet_cap is not None and self.triplet_cap < 1:
            raise ValueError("triplet_cap must be >= 1")


@dataclass
class SkipReport:
    no_neighbor: int = 0
    no_negative: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"no_neighbor": self.no_neighbor, "no_negative": self.no_negative}

    def __iadd__(self, other: "SkipReport") -> "SkipReport":
        self.no_neighbor += other.no_neighbor
        self.no_negative += other.no_negative
        return self


def mask_triplet(t: Triplet, slot: MaskSlot | str) -> MaskedTriplet:
    return MaskedTriplet(t, MaskSlot(slot))


def relation_words(relation: str) -> str:
    return " ".join(_WORD_RE.findall(relation))


def template_question(m: MaskedTriplet) -> str:
    t = m.source
    words = relation_words(t.relation)
    if m.masked_slot is MaskSlot.TAIL:
        return f"What is the {words} of {t.head}?"
    return f"What has {words} {t.tail}?"


def generate_question(gen: QuestionGenerator, m: MaskedTriplet, client=None) -> SyntheticQuestion:
    """Phrase a masked triplet as a question.

    ``client`` is an optional pre-built :class:`kgpr.llm.ChatClient`; one is
    created on demand for the external-llm kind.
    """
    if gen.kind == "template":
        return SyntheticQuestion(template_question(m), m.source.id, m.masked_slot, "template")

    from .llm import ChatClient

    assert gen.llm is not None
    own_client = client is None
    if own_client:
        client = ChatClient.from_config(gen.llm)
    try:
        text = client.question_for(m)
    except GeneratorError:
        if not gen.llm.fallback_to_template:
            raise
        log.warning("LLM generation failed for triplet %d; using template", m.source.id)
        return SyntheticQuestion(template_question(m), m.source.id, m.masked_slot, "template")
    finally:
        if own_client:
            client.close()
    return SyntheticQuestion(text, m.source.id, m.masked_slot, "external-llm")


def _plan_draws(g, tau, nbs, cfg, rng):
    """Neighbor/negative id pairs per slot, or ``None`` if a negative draw fails."""
    plan = []
    for slot in cfg.mask_slots:
        pairs = []
        for nb in rng.sample(nbs, min(cfg.neighbors_per_question, len(nbs))):
            for _ in range(cfg.negatives_per_question):
                neg = sample_negative(g, tau, rng)
                if neg is None:
                    return None
                pairs.append((nb, neg.id))
        plan.append((slot, pairs))
    return plan


def _build_partition(
    g: KnowledgeGraph,
    gen: QuestionGenerator,
    cfg: DatasetConfig,
    ids: list[int],
    rng: RngState,
    client,
) -> tuple[list[TrainingExample], SkipReport]:
    out: list[TrainingExample] = []
    skips = SkipReport()
    for tid in ids:
        tau = g.triplets[tid]
        nbs = sorted(neighbors(g, tau))
        if not nbs:
            skips.no_neighbor += 1
            continue
        plan = _plan_draws(g, tau, nbs, cfg, rng)
        if not plan:
            skips.no_negative += 1
            continue
        for slot, pairs in plan:
            q = generate_question(gen, mask_triplet(tau, slot), client)
            out.extend(TrainingExample(q, tid, nb, neg) for nb, neg in pairs)
    return out, skips


def build_dataset(
    g: KnowledgeGraph,
    gen: QuestionGenerator,
    cfg: DatasetConfig | None,
    rng: RngState,
    jobs: int = 1,
    client=None,
) -> tuple[list[TrainingExample], SkipReport]:
    """Build training quadruples for every (capped) triplet and mask slot.

    Triplets are split into ``jobs`` contiguous partitions; partition ``i``
    samples from ``RngState(rng.seed ^ i)`` and results are concatenated in
    partition order, so output depends on ``jobs`` but never on scheduling.
    Raises :class:`EmptyDatasetError` (carrying the skip report) when every
    triplet was skipped.
    """
    cfg = cfg or DatasetConfig()
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    n = len(g.triplets) if cfg.triplet_cap is None else min(cfg.triplet_cap, len(g.triplets))
    ids = list(range(n))
    size = -(-n // jobs)
    parts = [ids[i * size:(i + 1) * size] for i in range(jobs)]

    own_client = client is None and gen.kind == "external-llm"
    if own_client:
        from .llm import ChatClient

        client = ChatClient.from_config(gen.llm)
    try:
        if jobs == 1:
            results = [_build_partition(g, gen, cfg, parts[0], rng.spawn(0), client)]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(_build_partition, g, gen, cfg, part, rng.spawn(i), client)
                    for i, part in enumerate(parts)
                ]
                results = [f.result() for f in futures]
    finally:
        if own_client:
            client.close()

    examples: list[TrainingExample] = []
    skips = SkipReport()
    for part_examples, part_skips in results:
        examples.extend(part_examples)
        skips += part_skips
    if not examples:
        err = EmptyDatasetError(f"every triplet was skipped: {skips.as_dict()}")
        err.skips = skips
        raise err
    return examples, skips


_FIELDS = {
    "question": str,
    "source_triplet_id": int,
    "masked_slot": str,
    "generator": str,
    "positive_id": int,
    "neighbor_id": int,
    "negative_id": int,
}


def example_to_dict(ex: TrainingExample) -> dict:
    q = ex.question
    return {
        "question": q.text,
        "source_triplet_id": q.source_triplet_id,
        "masked_slot": q.masked_slot.value,
        "generator": q.generator,
        "positive_id": ex.positive_id,
        "neighbor_id": ex.neighbor_id,
        "negative_id": ex.negative_id,
    }


def example_from_dict(obj: dict, line: int | None = None) -> TrainingExample:
    if not isinstance(obj, dict):
        raise SchemaError("expected a JSON object", line)
    for key, typ in _FIELDS.items():
        if key not in obj:
            raise SchemaError(f"missing field {key!r}", line)
        value = obj[key]
        if not isinstance(value, typ) or isinstance(value, bool):
            raise SchemaError(f"field {key!r} must be {typ.__name__}", line)
    extra = set(obj) - set(_FIELDS)
    if extra:
        raise SchemaError(f"unknown field(s) {sorted(extra)}", line)
    try:
        q = SyntheticQuestion(
            obj["question"], obj["source_triplet_id"], MaskSlot(obj["masked_slot"]), obj["generator"]
        )
    except ValueError as exc:
        raise SchemaError(str(exc), line) from None
    return TrainingExample(q, obj["positive_id"], obj["neighbor_id"], obj["negative_id"])


def write_dataset(examples: Iterable[TrainingExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_dict(ex), ensure_ascii=False) + "\n")


def read_dataset(path: str | Path) -> list[TrainingExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", lineno) from None
            out.append(example_from_dict(obj, lineno))
    return out
