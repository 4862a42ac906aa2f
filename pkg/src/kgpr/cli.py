"""``kgpr`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .augment import build_dataset, read_dataset, write_dataset
from .config import RunConfig, load_config, override
from .encoder import DualEncoder, load_checkpoint
from .errors import KGPRError
from .evaluation import evaluate, split_dataset, sweep_csv, sweep_rows
from .kg import generate_synthetic_graph, load_graph, write_graph
from .pipeline import (
    dataset_config,
    dump_json,
    encoder_config,
    make_generator,
    margin_config,
    run_pipeline,
    train_config,
    write_sidecar,
)
from .retrieval import TripletIndex, assemble_subgraph, build_index, retrieve_topk
from .rng import RngState
from .training import train, write_loss_curve

log = logging.getLogger("kgpr")


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid K list {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("K values must be positive integers")
    return sorted(set(ks))


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run-config file; flags override its values")
    common.add_argument("--format", choices=["text", "lines", "json"], default="text")
    common.add_argument("--jobs", type=int, default=None, help="worker bound for parallel stages")
    common.add_argument("--seed", type=_seed, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kgpr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"kgpr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth-graph", parents=[common], help="write a random synthetic graph")
    p.add_argument("--entities", type=int)
    p.add_argument("--relations", type=int)
    p.add_argument("--triplets", type=int)
    p.add_argument("--out", help="TSV path (stdout if omitted)")

    p = sub.add_parser("build-dataset", parents=[common], help="synthesize questions and quadruples")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--generator", choices=["template", "llm"])
    p.add_argument("--neighbors", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--slots", help="comma list from {head,tail}")
    p.add_argument("--llm-base-url")
    p.add_argument("--llm-model")
    p.add_argument("--llm-fallback", action="store_true", default=None, help="use the template on LLM failure")

    p = sub.add_parser("split", parents=[common], help="split a dataset by source triplet")
    p.add_argument("--dataset", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--heldout-out", required=True)
    p.add_argument("--fraction", type=float)

    p = sub.add_parser("train", parents=[common], help="pretrain both towers")
    p.add_argument("--dataset", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--buckets", type=int)
    p.add_argument("--loss-csv", help="loss curve CSV path (default: <out>.loss.csv)")

    p = sub.add_parser("index", parents=[common], help="embed every triplet with the triplet tower")
    p.add_argument("--graph", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("retrieve", parents=[common], help="top-K triplets for a question")
    p.add_argument("--idx", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--graph", help="graph TSV; needed to print triplet text")

    for name, helptext in (("eval", "held-out retrieval report"), ("k-sweep", "recall versus K as CSV")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--idx", required=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--graph", required=True)
        p.add_argument("--heldout", required=True)
        p.add_argument("--k", type=_k_list, dest="k_list")
        p.add_argument("--out")
        if name == "eval":
            p.add_argument("--sweep-csv")

    p = sub.add_parser("pipeline", parents=[common], help="run the full seeded demo")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--buckets", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    get = lambda name: getattr(args, name, None)  # noqa: E731
    slots = get("slots")
    override(
        cfg,
        {
            "seed": get("seed"),
            "jobs": get("jobs"),
            "graph.entities": get("entities"),
            "graph.relations": get("relations"),
            "graph.triplets": get("triplets"),
            "dataset.generator": get("generator"),
            "dataset.neighbors": get("neighbors"),
            "dataset.negatives": get("negatives"),
            "dataset.cap": get("cap"),
            "dataset.mask_slots": [s.strip() for s in slots.split(",")] if slots else None,
            "dataset.holdout_fraction": get("fraction"),
            "dataset.llm.base_url": get("llm_base_url"),
            "dataset.llm.model": get("llm_model"),
            "dataset.llm.fallback_to_template": get("llm_fallback"),
            "encoder.dim": get("dim"),
            "encoder.buckets": get("buckets"),
            "train.epochs": get("epochs"),
            "train.batch": get("batch"),
            "train.lr": get("lr"),
            "train.gamma1": get("gamma1"),
            "train.gamma2": get("gamma2"),
            "eval.k_list": get("k_list"),
            "eval.k": get("k"),
        },
    )
    return cfg


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True))
    elif text:
        print(text)


def cmd_synth_graph(args, cfg: RunConfig) -> None:
    g = generate_synthetic_graph(cfg.graph.entities, cfg.graph.relations, cfg.graph.triplets, RngState(cfg.seed))
    if args.out:
        write_graph(g, args.out)
        write_sidecar(args.out, cfg)
        _emit(args, {"out": args.out, "triplets": len(g)}, f"wrote {len(g)} triplets to {args.out}")
    else:
        for t in g.triplets:
            sys.stdout.write(f"{t.head}\t{t.relation}\t{t.tail}\n")


def cmd_build_dataset(args, cfg: RunConfig) -> None:
    g = load_graph(args.graph)
    examples, skips = build_dataset(g, make_generator(cfg), dataset_config(cfg), RngState(cfg.seed), jobs=cfg.jobs)
    write_dataset(examples, args.out)
    write_sidecar(args.out, cfg, examples=len(examples), skipped=skips.as_dict())
    _emit(
        args,
        {"out": args.out, "examples": len(examples), "skipped": skips.as_dict()},
        f"wrote {len(examples)} examples to {args.out} (skipped: {skips.as_dict()})",
    )


def cmd_split(args, cfg: RunConfig) -> None:
    examples = read_dataset(args.dataset)
    tr, ho = split_dataset(examples, cfg.dataset.holdout_fraction, RngState(cfg.seed))
    write_dataset(tr, args.train_out)
    write_dataset(ho, args.heldout_out)
    for path, part in ((args.train_out, tr), (args.heldout_out, ho)):
        write_sidecar(path, cfg, examples=len(part))
    _emit(args, {"train": len(tr), "heldout": len(ho)}, f"train {len(tr)} / heldout {len(ho)}")


def cmd_train(args, cfg: RunConfig) -> None:
    g = load_graph(args.graph)
    examples = read_dataset(args.dataset)
    result = train(
        examples,
        g,
        encoder_config(cfg),
        train_config(cfg),
        margin_config(cfg),
        seed=cfg.seed,
        out=args.out,
        metadata={"config_hash": cfg.hash()},
    )
    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    write_loss_curve(result.loss_curve, loss_csv)
    final = result.loss_curve[-1][2]
    _emit(
        args,
        {"out": args.out, "steps": result.steps, "final_batch_loss": final, "fingerprint": result.model.fingerprint()},
        f"trained {result.steps} steps, final batch loss {final:.4f}; checkpoint {args.out}",
    )


def cmd_index(args, cfg: RunConfig) -> None:
    g = load_graph(args.graph)
    model = load_checkpoint(args.ckpt)
    index = build_index(g, model)
    index.save(args.out)
    write_sidecar(args.out, cfg, fingerprint=index.fingerprint)
    n_bad = int((~index.retrievable).sum())
    _emit(
        args,
        {"out": args.out, "rows": len(index), "unretrievable": n_bad, "fingerprint": index.fingerprint},
        f"indexed {len(index)} triplets ({n_bad} unretrievable) to {args.out}",
    )


def cmd_retrieve(args, cfg: RunConfig) -> None:
    g = load_graph(args.graph) if args.graph else None
    index = TripletIndex.load(args.idx, g)
    model = load_checkpoint(args.ckpt)
    result = retrieve_topk(index, model, args.question, cfg.eval.k)
    triplets = assemble_subgraph(g, result) if g is not None else None
    if args.format == "json":
        entries = []
        for n, (tid, score) in enumerate(result.entries):
            e = {"id": tid, "score": score}
            if triplets is not None:
                t = triplets[n]
                e.update(head=t.head, relation=t.relation, tail=t.tail)
            entries.append(e)
        print(json.dumps({"question": args.question, "k": cfg.eval.k, "results": entries}))
        return
    for n, (tid, score) in enumerate(result.entries):
        if triplets is not None:
            t = triplets[n]
            print(f"{t.head} | {t.relation} | {t.tail}")
        else:
            print(f"{tid}\t{score:.6f}")


def _eval_inputs(args):
    g = load_graph(args.graph)
    return TripletIndex.load(args.idx, g), load_checkpoint(args.ckpt), g, read_dataset(args.heldout)


def cmd_eval(args, cfg: RunConfig) -> None:
    index, model, g, heldout = _eval_inputs(args)
    rep = evaluate(index, model, g, heldout, cfg.eval.k_list)
    payload = {"seed": cfg.seed, "config_hash": cfg.hash(), "fingerprint": model.fingerprint(), **rep.to_dict()}
    if args.out:
        dump_json(payload, args.out)
    if args.sweep_csv:
        Path(args.sweep_csv).write_text(sweep_csv(sweep_rows(rep)))
    lines = [f"MRR {rep.mrr:.4f} over {rep.questions} questions"]
    lines += [f"Recall@{k} {v:.4f}" for k, v in rep.recall_at_k.items()]
    _emit(args, payload, "\n".join(lines))


def cmd_k_sweep(args, cfg: RunConfig) -> None:
    index, model, g, heldout = _eval_inputs(args)
    rows = sweep_rows(evaluate(index, model, g, heldout, cfg.eval.k_list))
    text = sweep_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    _emit(args, {"rows": [list(r) for r in rows]}, text.rstrip("\n"))


def cmd_pipeline(args, cfg: RunConfig) -> None:
    report = run_pipeline(cfg, args.out)
    s = report["summary"]
    _emit(
        args,
        report["summary"] | {"out": args.out, "config_hash": report["config_hash"]},
        f"Recall@{s['k']}: trained {s['trained_recall']:.4f} vs untrained {s['untrained_recall']:.4f}; "
        f"report at {Path(args.out) / 'report.json'}",
    )


COMMANDS = {
    "synth-graph": cmd_synth_graph,
    "build-dataset": cmd_build_dataset,
    "split": cmd_split,
    "train": cmd_train,
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "k-sweep": cmd_k_sweep,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve(args)
        COMMANDS[args.command](args, cfg)
    except KGPRError as exc:
        print(f"kgpr: {exc.category} error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"kgpr: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
