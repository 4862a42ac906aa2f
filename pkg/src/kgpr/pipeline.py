"""End-to-end orchestration: synthetic graph -> dataset -> split -> train -> index -> eval."""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from .augment import DatasetConfig, LLMConfig, MaskSlot, QuestionGenerator, build_dataset, write_dataset
from .config import RunConfig
from .encoder import DualEncoder, EncoderConfig, load_checkpoint, save_checkpoint
from .evaluation import evaluate, split_dataset, sweep_csv, sweep_rows
from .kg import generate_synthetic_graph, write_graph
from .retrieval import build_index
from .rng import RngState
from .training import MarginConfig, TrainConfig, train, write_loss_curve

log = logging.getLogger(__name__)


def make_generator(cfg: RunConfig) -> QuestionGenerator:
    kind = cfg.dataset.generator
    if kind == "template":
        return QuestionGenerator.template()
    if kind in ("llm", "external-llm"):
        s = cfg.dataset.llm
        extra = {"instruction": s.instruction} if s.instruction else {}
        return QuestionGenerator.external_llm(
            LLMConfig(
                base_url=s.base_url,
                model=s.model,
                api_key_env=s.api_key_env,
                timeout=s.timeout,
                max_in_flight=s.max_in_flight,
                fallback_to_template=s.fallback_to_template,
                **extra,
            )
        )
    raise ValueError(f"unknown generator {kind!r}")


def dataset_config(cfg: RunConfig) -> DatasetConfig:
    d = cfg.dataset
    return DatasetConfig(d.neighbors, d.negatives, tuple(MaskSlot(s) for s in d.mask_slots), d.cap)


def encoder_config(cfg: RunConfig) -> EncoderConfig:
    return EncoderConfig(cfg.encoder.dim, cfg.encoder.buckets)


def margin_config(cfg: RunConfig) -> MarginConfig:
    return MarginConfig(cfg.train.gamma1, cfg.train.gamma2)


def train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        epochs=t.epochs,
        batch_size=t.batch,
        shuffle_seed=cfg.seed,
        checkpoint_every=t.checkpoint_every,
        lr=t.lr,
        beta1=t.beta1,
        beta2=t.beta2,
        eps=t.eps,
        weight_decay=t.weight_decay,
        sparse=t.sparse,
    )


def write_sidecar(path: str | Path, cfg: RunConfig, **extra) -> None:
    meta = {"seed": cfg.seed, "config_hash": cfg.hash(), **extra}
    Path(f"{path}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_pipeline(cfg: RunConfig, out_dir: str | Path) -> dict:
    """Run the whole demo under ``cfg.seed`` and write every artifact to ``out_dir``.

    ``report.json`` holds no timestamps so reruns are byte-identical; wall
    times go to ``run.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    seed = cfg.seed
    chash = cfg.hash()

    g = generate_synthetic_graph(cfg.graph.entities, cfg.graph.relations, cfg.graph.triplets, RngState(seed))
    write_graph(g, out / "graph.tsv")
    write_sidecar(out / "graph.tsv", cfg)

    examples, skips = build_dataset(g, make_generator(cfg), dataset_config(cfg), RngState(seed), jobs=cfg.jobs)
    train_set, heldout = split_dataset(examples, cfg.dataset.holdout_fraction, RngState(seed))
    for name, part in (("dataset.jsonl", examples), ("train.jsonl", train_set), ("heldout.jsonl", heldout)):
        write_dataset(part, out / name)
        write_sidecar(out / name, cfg, examples=len(part))

    enc = encoder_config(cfg)
    init = DualEncoder.init(enc, seed)
    save_checkpoint(init, out / "untrained.ckpt", {"config_hash": chash, "epoch": 0})
    result = train(
        train_set,
        g,
        enc,
        train_config(cfg),
        margin_config(cfg),
        seed=seed,
        init=init,
        out=out / "model.ckpt",
        metadata={"config_hash": chash},
    )
    write_loss_curve(result.loss_curve, out / "loss.csv")

    reports = {}
    sweeps = {}
    fingerprints = {}
    for name in ("untrained", "trained"):
        ckpt = out / ("untrained.ckpt" if name == "untrained" else "model.ckpt")
        model = load_checkpoint(ckpt)
        index = build_index(g, model)
        idx_path = out / f"{name}.idx"
        index.save(idx_path)
        write_sidecar(idx_path, cfg, fingerprint=index.fingerprint)
        rep = evaluate(index, model, g, heldout, cfg.eval.k_list)
        reports[name] = rep.to_dict()
        sweeps[name] = sweep_rows(rep)
        fingerprints[name] = model.fingerprint()
        (out / f"sweep_{name}.csv").write_text(sweep_csv(sweeps[name]))

    k = cfg.eval.k if cfg.eval.k in cfg.eval.k_list else cfg.eval.k_list[-1]
    trained_r, untrained_r = reports["trained"]["recall_at_k"][str(k)], reports["untrained"]["recall_at_k"][str(k)]
    report = {
        "seed": seed,
        "config_hash": chash,
        "config": cfg.to_dict(),
        "graph": {"triplets": len(g), "entities": g.entity_count, "relations": g.relation_count},
        "dataset": {
            "examples": len(examples),
            "train": len(train_set),
            "heldout": len(heldout),
            "skipped": skips.as_dict(),
        },
        "training": {"steps": result.steps, "final_batch_loss": result.loss_curve[-1][2]},
        "fingerprints": fingerprints,
        "untrained": reports["untrained"],
        "trained": reports["trained"],
        "k_sweep": {name: [list(r) for r in rows] for name, rows in sweeps.items()},
        "summary": {
            "k": k,
            "trained_recall": trained_r,
            "untrained_recall": untrained_r,
            "ratio": trained_r / untrained_r if untrained_r else None,
        },
    }
    dump_json(report, out / "report.json")
    dump_json(
        {"seed": seed, "config_hash": chash, "started": started, "finished": time.time()},
        out / "run.json",
    )
    return report
