"""Exit criteria for the package, one test per criterion.

Each test records a one-line PASS/FAIL verdict, printed in the terminal
summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from kgpr.augment import DatasetConfig, MaskSlot, QuestionGenerator, build_dataset
from kgpr.config import RunConfig
from kgpr.encoder import DualEncoder, EncoderConfig
from kgpr.kg import KnowledgeGraph, generate_synthetic_graph
from kgpr.pipeline import run_pipeline
from kgpr.retrieval import build_index, retrieve_topk, score_all
from kgpr.rng import RngState
from kgpr.training import MarginConfig, backward, margin_loss, total_loss

from conftest import ACCEPTANCE_LINES, ADHD, CEPHALON, PREDNISONE
from gradcheck import central_diff, rel_err, touched


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")


def test_1_gradient_oracle():
    start = time.perf_counter()
    g = generate_synthetic_graph(200, 20, 1000, RngState(42))
    examples, _ = build_dataset(g, QuestionGenerator.template(), None, RngState(42))
    model = DualEncoder.init(EncoderConfig(dim=8, buckets=64), 42)
    worst, checked, over = 0.0, 0, 0
    for ex in examples[:100]:
        _, gq, gt = backward(ex, g, model, MarginConfig())
        for (table, rows, _), grad in zip(touched(model, g, ex), (gq, gt)):
            dense = grad.to_dense(table.shape)
            for r in rows:
                for c in range(table.shape[1]):
                    fd, _, _ = central_diff(model, g, ex, table, r, c, 1e-4)
                    an = dense[r, c]
                    if abs(fd) < 1e-8 and abs(an) < 1e-8:
                        continue
                    err = rel_err(fd, an)
                    worst = max(worst, err)
                    checked += 1
                    over += err >= 1e-4
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 10
    record(1, ok, f"max rel err {worst:.3g} over {checked} entries ({over} >= 1e-4), {elapsed:.1f}s")
    assert elapsed < 10
    assert worst < 1e-4


def _vec(c):
    return np.array([c, np.sqrt(1 - c * c)])


def test_2_loss_goldens():
    q = np.array([1.0, 0.0])
    m = MarginConfig(0.5, 0.5)
    z = np.array([0.2, -0.7, 0.4])
    cases = [
        (margin_loss(z, z, np.array([1.0, 1.0, 0.0]), 0.5), 0.5),
        (margin_loss(_vec(1.0), _vec(0.0), q, 0.5), 0.0),
        (margin_loss(_vec(0.2), _vec(0.9), q, 0.5), 1.2),
        (total_loss(_vec(0.9), _vec(0.6), _vec(0.0), q, m), 0.2),
        (total_loss(z, z, z, z, m), 1.0),
        (total_loss(_vec(1.0), _vec(0.4), _vec(-0.2), q, m), 0.0),
    ]
    errs = [abs(got - want) for got, want in cases]
    ok = max(errs) <= 1e-12
    record(2, ok, f"6 loss goldens, max abs err {max(errs):.2g}")
    assert ok


def test_3_dataset_invariants():
    start = time.perf_counter()
    g = generate_synthetic_graph(200, 20, 1000, RngState(42))
    examples, _ = build_dataset(g, QuestionGenerator.template(), None, RngState(42))
    violations = 0
    for ex in examples:
        tau = {g[ex.positive_id].head, g[ex.positive_id].tail}
        nb, neg = g[ex.neighbor_id], g[ex.negative_id]
        violations += ex.neighbor_id == ex.positive_id or not ({nb.head, nb.tail} & tau)
        violations += bool({neg.head, neg.tail} & tau)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 5 and examples
    record(3, ok, f"{len(examples)} examples, {violations} violations, {elapsed:.2f}s")
    assert ok


def test_4_retrieval_oracle():
    start = time.perf_counter()
    g = generate_synthetic_graph(200, 20, 1000, RngState(42))
    model = DualEncoder.init(EncoderConfig(), 42)
    index = build_index(g, model)
    rng = RngState(4)
    mismatches = 0
    for _ in range(200):
        q = f"What is the r{rng.randbelow(20)} of e{rng.randbelow(200)}?"
        scores = score_all(index, model, q)
        oracle = sorted(range(len(g)), key=lambda i: (-scores[i], i))
        for k in (1, 5, 10, 50):
            mismatches += retrieve_topk(index, model, q, k).ids != oracle[:k]
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    record(4, ok, f"800 top-K queries, {mismatches} mismatches vs exhaustive sort, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    cfg = RunConfig(seed=42)
    runs = []
    for name in ("a", "b"):
        out = tmp_path_factory.mktemp(f"pipeline_{name}")
        start = time.perf_counter()
        report = run_pipeline(cfg, out)
        runs.append((out, report, time.perf_counter() - start))
    return runs


def test_5_training_effectiveness(pipeline_runs):
    _, report, elapsed = pipeline_runs[0]
    cfg = report["config"]
    assert cfg["train"]["epochs"] == 5 and cfg["encoder"]["dim"] == 64
    assert cfg["train"]["gamma1"] == cfg["train"]["gamma2"] == 0.5
    trained, untrained = report["trained"], report["untrained"]
    r_t, r_u = trained["recall_at_k"]["10"], untrained["recall_at_k"]["10"]
    o = trained["ordering_stats"]
    gap1 = o["mean_cos_exact"] - o["mean_cos_neighbor"]
    gap2 = o["mean_cos_neighbor"] - o["mean_cos_negative"]
    ok = r_t >= 3 * r_u and gap1 > 0.05 and gap2 > 0.05 and elapsed < 300
    record(
        5,
        ok,
        f"Recall@10 trained {r_t:.4f} vs untrained {r_u:.4f}; cos exact/nb/neg "
        f"{o['mean_cos_exact']:.3f}/{o['mean_cos_neighbor']:.3f}/{o['mean_cos_negative']:.3f}; {elapsed:.1f}s",
    )
    assert ok
    # regression values pinned from the first seed-42 run
    assert r_t == pytest.approx(0.875, abs=1e-12)
    assert r_u == pytest.approx(0.01, abs=1e-12)
    assert trained["mrr"] == pytest.approx(0.5437, abs=1e-4)
    assert o["mean_cos_exact"] == pytest.approx(0.6882, abs=1e-3)
    assert o["mean_cos_neighbor"] == pytest.approx(0.1254, abs=1e-3)
    assert o["mean_cos_negative"] == pytest.approx(0.0031, abs=1e-3)


def test_6_k_sweep_trend(pipeline_runs):
    _, report, _ = pipeline_runs[0]
    ks = [1, 2, 5, 10, 20, 40]
    t = [report["trained"]["recall_at_k"][str(k)] for k in ks]
    u = [report["untrained"]["recall_at_k"][str(k)] for k in ks]
    ok = t == sorted(t) and all(a > b for a, b in zip(t, u))
    record(6, ok, "trained " + " ".join(f"{k}:{v:.3f}" for k, v in zip(ks, t))
           + " | untrained " + " ".join(f"{v:.3f}" for v in u))
    assert ok


def test_7_determinism(pipeline_runs):
    (a, _, _), (b, _, _) = pipeline_runs
    names = sorted(p.name for p in a.iterdir() if p.name != "run.json")
    differ = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    required = {"model.ckpt", "trained.idx", "untrained.idx", "report.json"}
    ok = not differ and required <= set(names)
    record(7, ok, f"{len(names)} artifacts compared, differing: {differ or 'none'}")
    assert ok


def test_8_augmentation_goldens():
    g = KnowledgeGraph.from_tuples(
        [ADHD, CEPHALON, PREDNISONE, ("Attention deficit hyperactivity disorder", "symptom", "Inattention")]
    )
    examples, _ = build_dataset(g, QuestionGenerator.template(), DatasetConfig(triplet_cap=1), RngState(42))
    tau = g[0]
    slots = sorted(ex.question.masked_slot.value for ex in examples)
    valid = all(
        g[ex.neighbor_id].shares_entity(tau) and ex.neighbor_id != 0 and not g[ex.negative_id].shares_entity(tau)
        for ex in examples
    )
    cephalon_is_neighbor = g[1].shares_entity(tau)
    prednisone_is_negative = not g[2].shares_entity(tau)
    ok = (
        len(examples) == 2
        and slots == [MaskSlot.HEAD.value, MaskSlot.TAIL.value]
        and valid
        and cephalon_is_neighbor
        and prednisone_is_negative
    )
    record(8, ok, f"{len(examples)} questions ({', '.join(slots)}), neighbors/negatives valid: {valid}")
    assert ok
