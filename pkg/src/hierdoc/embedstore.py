"""Chunk-embedding providers and the on-disk embedding store.

One provider interface, three backends: a bit-exact binary store (the
format real encoder exports are written in), a deterministic hash
embedder that needs no encoder at all, and an in-memory dict for unit
tests. Providers are frozen: the same doc_id always returns identical
bytes, mirroring the fact that base encoders are never trained.

Store layout (all integers little-endian):

    magic     8 bytes  b"HDEMB\\x00\\x00\\x01"
    dim       u32
    doc_count u64
    tag       32 bytes ASCII, NUL-padded (e.g. "use-dan-512")
    index     doc_count * [u16 id_len][id bytes][u32 n_chunks][u64 offset]
    payload   float32 row-major matrices; offset is relative to the
              start of the payload section
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .chunker import ChunkedDocument
from .rng import stream, token_key

MAGIC = b"HDEMB\x00\x00\x01"
_TAG_BYTES = 32
_HEADER = struct.Struct("<8sIQ")  # magic, dim, doc_count


@dataclass
class DocEmbedding:
    doc_id: str
    matrix: np.ndarray  # [n_chunks, dim] float32


class EmbeddingProvider:
    """Read-only map doc_id -> [n_chunks, dim] float32 matrix."""

    dim: int
    encoder_tag: str = ""

    def lookup(self, doc_id: str) -> np.ndarray:
        raise NotImplementedError

    def n_chunks(self, doc_id: str) -> int:
        return self.lookup(doc_id).shape[0]

    def doc_ids(self) -> list[str]:
        raise NotImplementedError

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in set(self.doc_ids())


def write_store(
    entries: Sequence[DocEmbedding],
    dim: int,
    encoder_tag: str,
    path: str | Path,
) -> None:
    """Write embeddings to ``path`` in the binary store format.

    All matrices must be [n_chunks, dim] with unique doc ids; values are
    stored as little-endian float32, so float32 input round-trips
    bit-exactly.
    """
    tag_bytes = encoder_tag.encode("ascii")
    if len(tag_bytes) > _TAG_BYTES:
        raise ValueError(f"encoder tag longer than {_TAG_BYTES} bytes: {encoder_tag!r}")
    seen: set[str] = set()
    index_parts: list[bytes] = []
    payload_parts: list[bytes] = []
    offset = 0
    for entry in entries:
        if entry.doc_id in seen:
            raise ValueError(f"duplicate doc_id {entry.doc_id!r}")
        seen.add(entry.doc_id)
        matrix = np.ascontiguousarray(entry.matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise ValueError(
                f"doc {entry.doc_id!r}: expected [n_chunks, {dim}] matrix, "
                f"got shape {entry.matrix.shape}"
            )
        if matrix.shape[0] < 1:
            raise ValueError(f"doc {entry.doc_id!r}: empty matrix")
        if not np.all(np.isfinite(matrix)):
            raise ValueError(f"doc {entry.doc_id!r}: non-finite values")
        id_bytes = entry.doc_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"doc_id too long: {entry.doc_id!r}")
        index_parts.append(
            struct.pack("<H", len(id_bytes))
            + id_bytes
            + struct.pack("<IQ", matrix.shape[0], offset)
        )
        data = matrix.tobytes(order="C")
        payload_parts.append(data)
        offset += len(data)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, len(index_parts)))
        fh.write(tag_bytes.ljust(_TAG_BYTES, b"\x00"))
        fh.writelines(index_parts)
        fh.writelines(payload_parts)


class StoreProvider(EmbeddingProvider):
    """Random-access reader over a store file; safe for concurrent lookups
    (positioned reads, no shared file offset)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fd = os.open(self.path, os.O_RDONLY)
        try:
            header = os.pread(self._fd, _HEADER.size, 0)
            if len(header) < _HEADER.size:
                raise ValueError(f"{self.path}: truncated header")
            magic, dim, doc_count = _HEADER.unpack(header)
            if magic != MAGIC:
                raise ValueError(f"{self.path}: bad magic {magic!r}")
            tag_raw = os.pread(self._fd, _TAG_BYTES, _HEADER.size)
            if len(tag_raw) < _TAG_BYTES:
                raise ValueError(f"{self.path}: truncated header")
            self.dim = dim
            self.encoder_tag = tag_raw.rstrip(b"\x00").decode("ascii")
            self._index: dict[str, tuple[int, int]] = {}
            pos = _HEADER.size + _TAG_BYTES
            size = self.path.stat().st_size
            for _ in range(doc_count):
                entry = self._read_exact(pos, 2)
                (id_len,) = struct.unpack("<H", entry)
                body = self._read_exact(pos + 2, id_len + 12)
                doc_id = body[:id_len].decode("utf-8")
                n_chunks, offset = struct.unpack("<IQ", body[id_len:])
                self._index[doc_id] = (n_chunks, offset)
                pos += 2 + id_len + 12
            self._payload_start = pos
            last_end = max(
                (off + n * dim * 4 for n, off in self._index.values()), default=0
            )
            if self._payload_start + last_end > size:
                raise ValueError(f"{self.path}: truncated payload")
        except Exception:
            os.close(self._fd)
            raise

    def _read_exact(self, pos: int, n: int) -> bytes:
        data = os.pread(self._fd, n, pos)
        if len(data) < n:
            raise ValueError(f"{self.path}: truncated index")
        return data

    def lookup(self, doc_id: str) -> np.ndarray:
        try:
            n_chunks, offset = self._index[doc_id]
        except KeyError:
            raise KeyError(f"doc_id {doc_id!r} not in store {self.path}") from None
        nbytes = n_chunks * self.dim * 4
        data = self._read_exact(self._payload_start + offset, nbytes)
        matrix = np.frombuffer(data, dtype="<f4").reshape(n_chunks, self.dim)
        return matrix

    def n_chunks(self, doc_id: str) -> int:
        return self._index[doc_id][0]

    def doc_ids(self) -> list[str]:
        return list(self._index)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._index

    def __len__(self) -> int:
        return len(self._index)

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self) -> "StoreProvider":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_store(path: str | Path) -> StoreProvider:
    return StoreProvider(path)


class InMemoryProvider(EmbeddingProvider):
    def __init__(self, matrices: dict[str, np.ndarray], dim: int, encoder_tag: str = "memory"):
        self.dim = dim
        self.encoder_tag = encoder_tag
        self._matrices = {k: np.asarray(v, dtype=np.float32) for k, v in matrices.items()}

    def lookup(self, doc_id: str) -> np.ndarray:
        return self._matrices[doc_id]

    def doc_ids(self) -> list[str]:
        return list(self._matrices)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._matrices


def hash_embed(tokens: Sequence[str], dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in chunk embedding.

    Each token maps to a pseudo-random unit vector keyed by (token hash,
    seed); the chunk embedding is the L2-normalized token-vector sum, so
    it is reproducible everywhere and near-orthogonal across unrelated
    chunks in high dimension.
    """
    if not tokens:
        raise ValueError("cannot embed an empty chunk")
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    total = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        total += _token_vector(token, dim, seed)
    norm = float(np.linalg.norm(total))
    if norm == 0.0:
        raise ValueError("degenerate chunk: token vectors cancelled")
    return (total / norm).astype(np.float32)


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, token_key(token)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    vec = gen.standard_normal(dim)
    return vec / np.linalg.norm(vec)


class HashEmbeddingProvider(EmbeddingProvider):
    """Embeds chunked documents with hash_embed, optionally injecting a
    per-class direction so a synthetic corpus becomes linearly separable
    (enables encoder-free end-to-end learning tests)."""

    def __init__(
        self,
        docs: Iterable[ChunkedDocument],
        dim: int,
        seed: int,
        class_signal: float = 0.0,
    ):
        self.dim = dim
        self.seed = seed
        self.class_signal = class_signal
        self.encoder_tag = f"hash-{dim}-s{seed}"
        self._docs = {d.doc_id: d for d in docs}
        self._token_cache: dict[str, np.ndarray] = {}
        self._cache: dict[str, np.ndarray] = {}

    def _chunk_vector(self, tokens: Sequence[str], label_id: int) -> np.ndarray:
        total = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            vec = self._token_cache.get(token)
            if vec is None:
                vec = _token_vector(token, self.dim, self.seed)
                self._token_cache[token] = vec
            total += vec
        norm = float(np.linalg.norm(total))
        if norm == 0.0:
            raise ValueError("degenerate chunk: token vectors cancelled")
        total /= norm
        if self.class_signal > 0.0:
            total[label_id % self.dim] += self.class_signal
            total /= np.linalg.norm(total)
        return total.astype(np.float32)

    def lookup(self, doc_id: str) -> np.ndarray:
        cached = self._cache.get(doc_id)
        if cached is not None:
            return cached
        doc = self._docs.get(doc_id)
        if doc is None:
            raise KeyError(f"doc_id {doc_id!r} unknown to hash provider")
        matrix = np.stack(
            [self._chunk_vector(chunk, doc.label_id) for chunk in doc.chunks]
        )
        self._cache[doc_id] = matrix
        return matrix

    def n_chunks(self, doc_id: str) -> int:
        return self._docs[doc_id].n_chunks

    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def materialize(self) -> list[DocEmbedding]:
        return [DocEmbedding(doc_id, self.lookup(doc_id)) for doc_id in self._docs]


def verify_store(docs: Iterable[ChunkedDocument], provider: EmbeddingProvider) -> list[str]:
    """Check that every chunked document has an embedding with a matching
    row count. Returns a list of problem descriptions (empty = OK)."""
    problems: list[str] = []
    for doc in docs:
        if doc.doc_id not in provider:
            problems.append(f"{doc.doc_id}: missing from store")
            continue
        rows = provider.n_chunks(doc.doc_id)
        if rows != doc.n_chunks:
            problems.append(
                f"{doc.doc_id}: store has {rows} rows, chunks file has {doc.n_chunks}"
            )
    return problems
