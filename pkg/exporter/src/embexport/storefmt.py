"""Writer (and verification reader) for the binary embedding store.

Layout, all integers little-endian:

    magic     8 bytes  b"HDEMB\\x00\\x00\\x01"
    dim       u32
    doc_count u64
    tag       32 bytes ASCII, NUL-padded (e.g. "use-dan-512")
    index     doc_count * [u16 id_len][id utf-8][u32 n_chunks][u64 offset]
    payload   float32 row-major matrices; offset relative to payload start

This is an independent implementation of the consumer side's format; the
integration suite cross-checks it against that reader byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"HDEMB\x00\x00\x01"
TAG_BYTES = 32
_HEADER = struct.Struct("<8sIQ")  # magic, dim, doc_count
_IDLEN = struct.Struct("<H")
_ENTRY_TAIL = struct.Struct("<IQ")  # n_chunks, offset


def write_store(
    entries: Sequence[tuple[str, np.ndarray]],
    dim: int,
    encoder_tag: str,
    path: str | Path,
) -> None:
    """Write (doc_id, [n_chunks, dim] float32 matrix) pairs in order."""
    tag_bytes = encoder_tag.encode("ascii")
    if len(tag_bytes) > TAG_BYTES:
        raise ValueError(f"encoder tag longer than {TAG_BYTES} bytes: {encoder_tag!r}")
    seen: set[str] = set()
    index_parts: list[bytes] = []
    payload_parts: list[bytes] = []
    offset = 0
    for doc_id, matrix in entries:
        if doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        matrix = np.ascontiguousarray(matrix, dtype="<f4")
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise ValueError(
                f"doc {doc_id!r}: expected [n_chunks, {dim}] matrix, got {matrix.shape}"
            )
        if matrix.shape[0] < 1:
            raise ValueError(f"doc {doc_id!r}: empty matrix")
        if not np.all(np.isfinite(matrix)):
            raise ValueError(f"doc {doc_id!r}: non-finite values")
        id_bytes = doc_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"doc_id too long: {doc_id!r}")
        index_parts.append(
            _IDLEN.pack(len(id_bytes))
            + id_bytes
            + _ENTRY_TAIL.pack(matrix.shape[0], offset)
        )
        data = matrix.tobytes(order="C")
        payload_parts.append(data)
        offset += len(data)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, len(index_parts)))
        fh.write(tag_bytes.ljust(TAG_BYTES, b"\x00"))
        fh.writelines(index_parts)
        fh.writelines(payload_parts)


class StoreReader:
    """Self-check and merge support: loads the full index eagerly and
    returns matrices in file order."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        data = self.path.read_bytes()
        if len(data) < _HEADER.size + TAG_BYTES:
            raise ValueError(f"{path}: truncated header")
        magic, dim, count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        pos = _HEADER.size
        tag_raw = data[pos : pos + TAG_BYTES]
        pos += TAG_BYTES
        self.dim = int(dim)
        self.encoder_tag = tag_raw.rstrip(b"\x00").decode("ascii")
        self._order: list[str] = []
        self._meta: dict[str, tuple[int, int]] = {}  # doc_id -> (n_chunks, offset)
        for _ in range(count):
            if pos + _IDLEN.size > len(data):
                raise ValueError(f"{path}: truncated index")
            (id_len,) = _IDLEN.unpack_from(data, pos)
            pos += _IDLEN.size
            if pos + id_len + _ENTRY_TAIL.size > len(data):
                raise ValueError(f"{path}: truncated index")
            doc_id = data[pos : pos + id_len].decode("utf-8")
            pos += id_len
            n_chunks, offset = _ENTRY_TAIL.unpack_from(data, pos)
            pos += _ENTRY_TAIL.size
            self._order.append(doc_id)
            self._meta[doc_id] = (int(n_chunks), int(offset))
        self._payload = data[pos:]
        for doc_id, (n_chunks, offset) in self._meta.items():
            if offset + n_chunks * self.dim * 4 > len(self._payload):
                raise ValueError(f"{path}: truncated payload for {doc_id!r}")

    def __len__(self) -> int:
        return len(self._order)

    def doc_ids(self) -> list[str]:
        return list(self._order)

    def n_chunks(self, doc_id: str) -> int:
        return self._meta[doc_id][0]

    def matrix(self, doc_id: str) -> np.ndarray:
        n_chunks, offset = self._meta[doc_id]
        nbytes = n_chunks * self.dim * 4
        return (
            np.frombuffer(self._payload[offset : offset + nbytes], dtype="<f4")
            .reshape(n_chunks, self.dim)
            .copy()
        )

    def entries(self) -> Iterable[tuple[str, np.ndarray]]:
        for doc_id in self._order:
            yield doc_id, self.matrix(doc_id)
