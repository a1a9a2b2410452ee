"""Reader for the chunks.jsonl interchange format.

One JSON object per line:

    {"doc_id": str, "label": int, "split": str,
     "chunks": [[token, ...], ...], "truncated": bool}

The exporter does no text processing of its own: each chunk's tokens are
re-joined with single spaces and that string is exactly what the encoder
sees, keeping embeddings aligned with the chunking that produced them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


@dataclass(frozen=True)
class ChunkRecord:
    doc_id: str
    texts: tuple[str, ...]  # one space-joined string per chunk, in order

    @property
    def n_chunks(self) -> int:
        return len(self.texts)


def iter_chunks(path: str | Path) -> Iterator[ChunkRecord]:
    """Yield documents in file order (the export order contract)."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                doc_id = record["doc_id"]
                chunks = record["chunks"]
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
            if not isinstance(doc_id, str) or not doc_id:
                raise ValueError(f"{path}:{line_no}: bad doc_id {doc_id!r}")
            if not chunks:
                raise ValueError(f"{path}:{line_no}: document has no chunks")
            texts = []
            for chunk in chunks:
                if not chunk or not all(isinstance(t, str) and t for t in chunk):
                    raise ValueError(f"{path}:{line_no}: malformed chunk in {doc_id!r}")
                texts.append(" ".join(chunk))
            yield ChunkRecord(doc_id=doc_id, texts=tuple(texts))


def read_chunks(path: str | Path) -> list[ChunkRecord]:
    records = list(iter_chunks(path))
    seen: set[str] = set()
    for r in records:
        if r.doc_id in seen:
            raise ValueError(f"{path}: duplicate doc_id {r.doc_id!r}")
        seen.add(r.doc_id)
    return records
