"""Command-line interface.

Subcommands mirror the pipeline stages: preprocess -> chunk -> embed ->
train -> eval, plus `table` for rendering accuracy grids against the
published reference numbers.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .chunker import chunk_document, read_chunks_jsonl, write_chunks_jsonl
from .corpus import CANONICAL_HEADER, load_dataset, load_manifest
from .embedstore import (
    DocEmbedding,
    HashEmbeddingProvider,
    open_store,
    verify_store,
    write_store,
)
from .harness import (
    Metrics,
    TrainConfig,
    TrainReport,
    emit_table,
    evaluate,
    load_reference,
    predictions_to_csv,
    run_experiment,
)
from .heads import load_head
from .textprep import preprocess, tokenize

log = logging.getLogger(__name__)


def _cmd_preprocess(args: argparse.Namespace) -> int:
    with open(args.input, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(CANONICAL_HEADER):
            raise ValueError(
                f"{args.input}: expected header {','.join(CANONICAL_HEADER)}"
            )
        rows = [[r[0], r[1], r[2], preprocess(r[3])] for r in reader]
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_HEADER)
        writer.writerows(rows)
    print(f"preprocessed {len(rows)} documents -> {args.output}")
    return 0


def _cmd_chunk(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    corpus = load_dataset(manifest, args.input)
    chunk_size = args.chunk_size or manifest.default_chunk_size
    docs = []
    truncated = 0
    for d in corpus.documents:
        doc = chunk_document(
            d.doc_id,
            tokenize(preprocess(d.raw_text)),
            d.label_id,
            chunk_size,
            args.max_chunks,
            d.split,
        )
        truncated += doc.truncated
        docs.append(doc)
    write_chunks_jsonl(docs, args.output)
    print(
        f"chunked {len(docs)} documents (chunk_size {chunk_size}, "
        f"{truncated} truncated) -> {args.output}"
    )
    return 0


def _cmd_embed_hash(args: argparse.Namespace) -> int:
    docs = read_chunks_jsonl(args.chunks)
    provider = HashEmbeddingProvider(
        docs, dim=args.dim, seed=args.seed, class_signal=args.class_signal
    )
    entries = [DocEmbedding(d.doc_id, provider.lookup(d.doc_id)) for d in docs]
    write_store(entries, args.dim, provider.encoder_tag, args.output)
    print(f"embedded {len(entries)} documents (dim {args.dim}) -> {args.output}")
    return 0


def _cmd_embed_verify(args: argparse.Namespace) -> int:
    docs = read_chunks_jsonl(args.chunks)
    with open_store(args.store) as provider:
        problems = verify_store(docs, provider)
        tag, dim = provider.encoder_tag, provider.dim
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        print(f"FAILED: {len(problems)} problems in {args.store}")
        return 1
    print(f"OK: {len(docs)} documents verified against {args.store} (tag {tag}, dim {dim})")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    report = run_experiment(args.config)
    m = report.test_metrics
    print(
        json.dumps(
            {
                "model": report.config.model_name,
                "dataset": report.config.dataset_name,
                "epochs_run": len(report.epoch_train_loss),
                "best_epoch": report.best_epoch,
                "test_accuracy": m.accuracy if m else None,
                "wall_clock_seconds": round(report.wall_clock_seconds, 2),
                "checkpoint": report.checkpoint_path,
            },
            indent=2,
        )
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_head(args.checkpoint)
    docs = [d for d in read_chunks_jsonl(args.chunks) if d.split == args.split]
    if not docs:
        raise ValueError(f"no documents with split {args.split!r} in {args.chunks}")
    class_names = None
    if args.manifest:
        class_names = load_manifest(args.manifest).class_names
    if args.store:
        provider = open_store(args.store)
    else:
        all_docs = read_chunks_jsonl(args.chunks)
        provider = HashEmbeddingProvider(
            all_docs, dim=model.input_dim, seed=args.seed, class_signal=args.class_signal
        )
    metrics, predictions = evaluate(model, docs, provider, class_names)
    print(json.dumps(metrics.to_dict(), indent=2))
    if args.predictions:
        Path(args.predictions).write_text(predictions_to_csv(predictions), encoding="utf-8")
        log.info("wrote predictions to %s", args.predictions)
    return 0


def _report_from_dict(data: dict) -> TrainReport:
    tm = data.get("test_metrics")
    metrics = (
        Metrics(
            accuracy=tm["accuracy"],
            loss=tm["loss"],
            per_class_precision=tm["per_class"]["precision"],
            per_class_recall=tm["per_class"]["recall"],
            confusion=tm["confusion"],
        )
        if tm
        else None
    )
    return TrainReport(config=TrainConfig.from_dict(data["config"]), test_metrics=metrics)


def _cmd_table(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            reports.append(_report_from_dict(json.load(fh)))
    reference = None
    if not args.no_reference:
        reference = load_reference(args.reference)
    sys.stdout.write(emit_table(reports, reference))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierdoc",
        description="Hierarchical long-document classification over chunk embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean the text column of a canonical CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("chunk", help="preprocess + split documents into word chunks")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--manifest", required=True, help="dataset name or manifest path")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--chunk-size", type=int, default=None)
    p.add_argument("--max-chunks", type=int, default=64)
    p.set_defaults(func=_cmd_chunk)

    p = sub.add_parser("embed", help="create or check embedding stores")
    esub = p.add_subparsers(dest="embed_command", required=True)
    ph = esub.add_parser("hash", help="deterministic hash embeddings (no encoder needed)")
    ph.add_argument("--chunks", required=True)
    ph.add_argument("--dim", type=int, default=512)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--class-signal", type=float, default=0.0)
    ph.add_argument("--out", dest="output", required=True)
    ph.set_defaults(func=_cmd_embed_hash)
    pv = esub.add_parser("verify", help="check a store against a chunks file")
    pv.add_argument("--chunks", required=True)
    pv.add_argument("--store", required=True)
    pv.set_defaults(func=_cmd_embed_verify)

    p = sub.add_parser("train", help="run a training experiment from a config file")
    p.add_argument("--config", required=True, help="run.json with TrainConfig fields")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a chunks-file split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--store", default=None, help="embedding store (default: hash embedder)")
    p.add_argument("--split", default="test")
    p.add_argument("--manifest", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-signal", type=float, default=0.0)
    p.add_argument("--predictions", default=None, help="write predictions CSV here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("table", help="render an accuracy table against reference values")
    p.add_argument("--reports", nargs="*", default=[], help="report.json files")
    p.add_argument("--reference", default=None, help="reference grid (default: bundled)")
    p.add_argument("--no-reference", action="store_true")
    p.set_defaults(func=_cmd_table)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
