"""Segment token sequences into fixed-size chunks.

A document becomes an ordered list of chunks of exactly ``chunk_size``
tokens (the last chunk may be shorter); tokens beyond
``chunk_size * max_chunks`` are dropped and the document flagged as
truncated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


@dataclass
class ChunkedDocument:
    doc_id: str
    chunks: list[list[str]]
    chunk_size: int
    label_id: int
    split: str = "train"
    truncated: bool = field(default=False)

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)


def chunk_tokens(
    tokens: list[str], chunk_size: int, max_chunks: int = 64
) -> tuple[list[list[str]], bool]:
    """Slice ``tokens`` into consecutive chunks of ``chunk_size``.

    Returns (chunks, truncated). Raises ValueError on an empty sequence or
    non-positive sizes.
    """
    if not tokens:
        raise ValueError("cannot chunk an empty token sequence")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    if max_chunks < 1:
        raise ValueError(f"max_chunks must be >= 1, got {max_chunks}")
    limit = chunk_size * max_chunks
    truncated = len(tokens) > limit
    kept = tokens[:limit]
    chunks = [kept[i : i + chunk_size] for i in range(0, len(kept), chunk_size)]
    return chunks, truncated


def chunk_document(
    doc_id: str,
    tokens: list[str],
    label_id: int,
    chunk_size: int,
    max_chunks: int = 64,
    split: str = "train",
) -> ChunkedDocument:
    chunks, truncated = chunk_tokens(tokens, chunk_size, max_chunks)
    return ChunkedDocument(
        doc_id=doc_id,
        chunks=chunks,
        chunk_size=chunk_size,
        label_id=label_id,
        split=split,
        truncated=truncated,
    )


# the two chunk geometries the training pipeline supports
CHUNK_SIZES = (20, 50)


def choose_chunk_size(avg_words: float) -> int:
    """Pick a chunk size from the dataset's average document length.

    Short-document datasets (< 100 words on average) get 20-word chunks so
    a typical document still spans at least two chunks; long-document
    datasets get 50-word chunks to bound sequence length.
    """
    if avg_words <= 0:
        raise ValueError(f"avg_words must be positive, got {avg_words}")
    return 20 if avg_words < 100 else 50


def expected_chunk_count(n_tokens: int, chunk_size: int, max_chunks: int = 64) -> int:
    """Closed-form chunk count: ceil(min(n, size*max) / size)."""
    kept = min(n_tokens, chunk_size * max_chunks)
    return -(-kept // chunk_size)


def write_chunks_jsonl(docs: Iterable[ChunkedDocument], path: str | Path) -> None:
    """Write one JSON object per document: the contract consumed by the
    embedding store and the encoder exporter."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "doc_id": doc.doc_id,
                "label": doc.label_id,
                "split": doc.split,
                "chunks": doc.chunks,
                "truncated": doc.truncated,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def iter_chunks_jsonl(path: str | Path) -> Iterator[ChunkedDocument]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            chunks = record["chunks"]
            if not chunks:
                raise ValueError(f"{path}:{line_no}: document has no chunks")
            yield ChunkedDocument(
                doc_id=record["doc_id"],
                chunks=chunks,
                chunk_size=max(len(c) for c in chunks),
                label_id=int(record["label"]),
                split=record.get("split", "train"),
                truncated=bool(record.get("truncated", False)),
            )


def read_chunks_jsonl(path: str | Path) -> list[ChunkedDocument]:
    return list(iter_chunks_jsonl(path))
