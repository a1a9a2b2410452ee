"""The export pipeline: chunks.jsonl -> frozen encoder -> store file.

Determinism contract: documents are processed in file order, chunks are
batched in that same order, and the encoder runs in eval mode, so
exporting the same file twice produces byte-identical stores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chunks import ChunkRecord, read_chunks
from .encoders import Encoder, make_encoder
from .storefmt import StoreReader, write_store

log = logging.getLogger(__name__)


@dataclass
class ExportJob:
    chunks_path: str
    encoder: str = "use_dan"
    pooling: str = "cls"  # bert_base_uncased only
    batch_size: int = 32
    out_path: str = "embeddings.bin"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def _encode_all(
    records: list[ChunkRecord], encoder: Encoder, batch_size: int
) -> list[tuple[str, np.ndarray]]:
    """Batch chunks across document boundaries, in order, then slice the
    flat result back into per-document matrices."""
    flat: list[str] = []
    for r in records:
        flat.extend(r.texts)
    rows: list[np.ndarray] = []
    for lo in range(0, len(flat), batch_size):
        batch = flat[lo : lo + batch_size]
        vecs = encoder.encode(batch)
        vecs = np.asarray(vecs, dtype=np.float32)
        if vecs.shape != (len(batch), encoder.dim):
            raise RuntimeError(
                f"encoder returned {vecs.shape}, expected {(len(batch), encoder.dim)}"
            )
        rows.append(vecs)
    stacked = np.concatenate(rows, axis=0) if rows else np.zeros((0, encoder.dim), "f4")
    entries: list[tuple[str, np.ndarray]] = []
    pos = 0
    for r in records:
        entries.append((r.doc_id, stacked[pos : pos + r.n_chunks]))
        pos += r.n_chunks
    return entries


def run_export(job: ExportJob, encoder: Encoder | None = None) -> Path:
    """Export one chunks file to one store file; returns the store path.

    ``encoder`` overrides the job's named encoder (dependency injection
    for tests); the job's name is still used for nothing else, so the
    injected encoder's tag and dim win.
    """
    records = read_chunks(job.chunks_path)
    if encoder is None:
        encoder = make_encoder(job.encoder, job.pooling)
    entries = _encode_all(records, encoder, job.batch_size)
    write_store(entries, encoder.dim, encoder.tag, job.out_path)
    total_chunks = sum(r.n_chunks for r in records)
    log.info(
        "exported %d documents / %d chunks (dim %d, tag %s) -> %s",
        len(records),
        total_chunks,
        encoder.dim,
        encoder.tag,
        job.out_path,
    )
    return Path(job.out_path)


def merge_stores(inputs: list[str | Path], out_path: str | Path) -> Path:
    """Concatenate shard stores (same dim and tag) into one, preserving
    shard order; duplicate doc ids are an error."""
    if not inputs:
        raise ValueError("no input stores to merge")
    readers = [StoreReader(p) for p in inputs]
    dim = readers[0].dim
    tag = readers[0].encoder_tag
    for r in readers[1:]:
        if r.dim != dim:
            raise ValueError(f"{r.path}: dim {r.dim} != {dim}")
        if r.encoder_tag != tag:
            raise ValueError(f"{r.path}: tag {r.encoder_tag!r} != {tag!r}")
    entries: list[tuple[str, np.ndarray]] = []
    for r in readers:
        entries.extend(r.entries())
    write_store(entries, dim, tag, out_path)
    return Path(out_path)
