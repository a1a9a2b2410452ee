"""Command-line interface: `embexport export` and `embexport merge`."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoders import POOLINGS, available_encoders
from .export import ExportJob, merge_stores, run_export


def _cmd_export(args: argparse.Namespace) -> int:
    job = ExportJob(
        chunks_path=args.chunks,
        encoder=args.encoder,
        pooling=args.pooling,
        batch_size=args.batch_size,
        out_path=args.output,
    )
    path = run_export(job)
    print(f"wrote {path}")
    return 0


def _cmd_merge(args: argparse.Namespace) -> int:
    path = merge_stores(args.inputs, args.output)
    print(f"merged {len(args.inputs)} stores -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export frozen sentence-encoder chunk embeddings to a binary store.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a chunks.jsonl file into a store")
    p.add_argument("--chunks", required=True, help="chunks.jsonl produced by the chunker")
    p.add_argument(
        "--encoder",
        default="use_dan",
        choices=available_encoders(),
        help="debug_stub is deterministic and weight-free, for pipeline tests",
    )
    p.add_argument("--pooling", default="cls", choices=POOLINGS)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("merge", help="concatenate shard stores into one")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_merge)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
