from __future__ import annotations

import pytest

from kgpr.kg import KnowledgeGraph, generate_synthetic_graph
from kgpr.rng import RngState

ADHD = ("Attention deficit hyperactivity disorder", "treatments", "Modafinil")
CEPHALON = ("Cephalon", "product", "Modafinil")
PREDNISONE = ("Prednisone", "active_moiety_of_formulation", "Prednisone 10 tablet")


@pytest.fixture(scope="session")
def synth_graph() -> KnowledgeGraph:
    return generate_synthetic_graph(200, 20, 1000, RngState(42))


@pytest.fixture
def chain_graph() -> KnowledgeGraph:
    return KnowledgeGraph.from_tuples(
        [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d"), ("d", "r", "e"), ("e", "r", "f")]
    )


@pytest.fixture
def table2_graph() -> KnowledgeGraph:
    """The augmentation example's triplet with its neighbor and negative."""
    return KnowledgeGraph.from_tuples(
        [
            ADHD,
            CEPHALON,
            PREDNISONE,
            ("Attention deficit hyperactivity disorder", "symptom", "Inattention"),
            ("Ibuprofen", "drug_class", "NSAID"),
        ]
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
