import pytest

from kgpr.augment import MaskSlot, QuestionGenerator, SyntheticQuestion, TrainingExample, build_dataset
from kgpr.encoder import DualEncoder, EncoderConfig, serialize_triplet, token_buckets
from kgpr.errors import EmptyDatasetError
from kgpr.evaluation import DEFAULT_K_LIST, evaluate, k_sweep, split_dataset, sweep_csv
from kgpr.kg import KnowledgeGraph
from kgpr.retrieval import build_index
from kgpr.rng import RngState
from kgpr.training import TrainConfig, train


def make_examples(n_triplets, per=2):
    out = []
    for tid in range(n_triplets):
        for s in list(MaskSlot)[:per]:
            out.append(TrainingExample(SyntheticQuestion(f"q{tid}{s.value}", tid, s), tid, tid + 1, tid + 2))
    return out


def test_split_half_of_ten_groups():
    tr, ho = split_dataset(make_examples(10), 0.5, RngState(1))
    assert len({e.question.source_triplet_id for e in tr}) == 5
    assert len({e.question.source_triplet_id for e in ho}) == 5


def test_split_never_straddles_and_is_deterministic():
    ex = make_examples(37)
    tr, ho = split_dataset(ex, 0.3, RngState(8))
    assert not ({e.question.source_triplet_id for e in tr} & {e.question.source_triplet_id for e in ho})
    assert len(tr) + len(ho) == len(ex)
    assert split_dataset(ex, 0.3, RngState(8)) == (tr, ho)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
def test_split_fraction_bounds(fraction):
    with pytest.raises(ValueError):
        split_dataset(make_examples(4), fraction, RngState(0))


def test_split_side_empty():
    with pytest.raises(EmptyDatasetError):
        split_dataset(make_examples(1), 0.5, RngState(0))
    with pytest.raises(EmptyDatasetError):
        split_dataset(make_examples(1, per=1), 0.5, RngState(0))


@pytest.fixture(scope="module")
def fixture_run(synth_graph):
    g = synth_graph
    examples, _ = build_dataset(g, QuestionGenerator.template(), None, RngState(42))
    tr, ho = split_dataset(examples, 0.2, RngState(42))
    cfg = EncoderConfig()
    untrained = DualEncoder.init(cfg, 42)
    trained = train(tr, g, cfg, TrainConfig(shuffle_seed=42), seed=42, init=untrained).model
    return g, ho, untrained, trained


def test_untrained_recall_near_chance(fixture_run):
    g, ho, untrained, _ = fixture_run
    rep = evaluate(build_index(g, untrained), untrained, g, ho, [10])
    # chance is K/|G| = 0.01; value measured once with these seeds
    assert rep.recall_at_k[10] == pytest.approx(0.01, abs=1e-12)
    assert rep.questions == 400


def test_report_bounds_and_monotone(fixture_run):
    g, ho, untrained, trained = fixture_run
    for model in (untrained, trained):
        rep = evaluate(build_index(g, model), model, g, ho, DEFAULT_K_LIST)
        recalls = [rep.recall_at_k[k] for k in DEFAULT_K_LIST]
        assert recalls == sorted(recalls)
        assert all(0 <= r <= 1 for r in recalls)
        assert all(0 <= r <= 1 for r in rep.neighbor_recall_at_k.values())
        assert 0 < rep.mrr <= 1
        assert rep.recall_at_k[1] <= rep.mrr


def test_trained_curve_dominates_untrained(fixture_run):
    g, ho, untrained, trained = fixture_run
    u = k_sweep(build_index(g, untrained), untrained, g, ho)
    t = k_sweep(build_index(g, trained), trained, g, ho)
    assert all(tr[1] > ur[1] for tr, ur in zip(t, u))


def test_sweep_rows_match_per_k_evaluate(fixture_run):
    g, ho, _, trained = fixture_run
    idx = build_index(g, trained)
    rows = k_sweep(idx, trained, g, ho, [1, 5, 20])
    for k, recall, nb in rows:
        single = evaluate(idx, trained, g, ho, [k])
        assert (recall, nb) == (single.recall_at_k[k], single.neighbor_recall_at_k[k])
    assert len(k_sweep(idx, trained, g, ho, [1])) == 1
    csv_text = sweep_csv(rows)
    assert csv_text.splitlines()[0] == "K,recall,neighbor_recall" and len(csv_text.splitlines()) == 4


def test_evaluate_is_reproducible(fixture_run):
    g, ho, _, trained = fixture_run
    idx = build_index(g, trained)
    assert evaluate(idx, trained, g, ho).to_dict() == evaluate(idx, trained, g, ho).to_dict()


def test_unretrievable_source_scores_zero_reciprocal_rank():
    g = KnowledgeGraph.from_tuples([("a", "r", "b"), ("b", "s", "c"), ("x", "t", "y")])
    V = 1 << 16
    m = DualEncoder.init(EncoderConfig(dim=4, buckets=V), 0)
    m.triplet.table[token_buckets(serialize_triplet(g[0]), V)] = 0.0
    m.changed()
    ex = [TrainingExample(SyntheticQuestion("What is the r of a?", 0, MaskSlot.TAIL), 0, 1, 2)]
    idx = build_index(g, m)
    assert not idx.retrievable[0]
    rep = evaluate(idx, m, g, [ex[0]], [1, 2])
    assert rep.mrr == 0.0 and rep.recall_at_k == {1: 0.0, 2: 0.0}


def test_evaluate_errors(fixture_run):
    g, ho, _, trained = fixture_run
    idx = build_index(g, trained)
    with pytest.raises(EmptyDatasetError):
        evaluate(idx, trained, g, [])
    with pytest.raises(ValueError):
        evaluate(idx, trained, g, ho, [10, 5])
