"""Frozen-encoder embedding exporter.

Reads a chunks.jsonl file (one JSON object per document with its word
chunks), runs each chunk through a frozen sentence encoder, and writes
the embeddings in the binary store format the training pipeline reads.
The two components communicate only through those two file formats.
"""

from .chunks import ChunkRecord, read_chunks
from .encoders import available_encoders, make_encoder
from .export import ExportJob, merge_stores, run_export
from .storefmt import StoreReader, write_store

__all__ = [
    "ChunkRecord",
    "ExportJob",
    "StoreReader",
    "available_encoders",
    "make_encoder",
    "merge_stores",
    "read_chunks",
    "run_export",
    "write_store",
]
