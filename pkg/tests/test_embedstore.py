"""Embedding store: binary round-trips, corruption detection, hash
embeddings, and the chunks-vs-store verifier."""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from hierdoc.chunker import chunk_document
from hierdoc.embedstore import (
    MAGIC,
    DocEmbedding,
    HashEmbeddingProvider,
    InMemoryProvider,
    StoreProvider,
    hash_embed,
    open_store,
    verify_store,
    write_store,
)
from hierdoc.rng import stream


def _random_entries(gen, count, dim):
    return [
        DocEmbedding(f"doc-{i}", gen.standard_normal((int(gen.integers(1, 9)), dim)).astype(np.float32))
        for i in range(count)
    ]


def test_round_trip_bit_exact(tmp_path):
    gen = stream(1, "test/store")
    entries = _random_entries(gen, 20, 16)
    path = tmp_path / "x.emb"
    write_store(entries, 16, "unit-test-16", path)
    with open_store(path) as store:
        assert store.dim == 16
        assert store.encoder_tag == "unit-test-16"
        assert len(store) == 20
        assert sorted(store.doc_ids()) == sorted(e.doc_id for e in entries)
        for e in entries:
            got = store.lookup(e.doc_id)
            assert got.dtype == np.float32
            np.testing.assert_array_equal(got, e.matrix)
            assert store.n_chunks(e.doc_id) == e.matrix.shape[0]


def test_utf8_doc_ids(tmp_path):
    entries = [DocEmbedding("døc/中文", np.ones((2, 8), dtype=np.float32))]
    path = tmp_path / "x.emb"
    write_store(entries, 8, "t", path)
    with open_store(path) as store:
        assert store.doc_ids() == ["døc/中文"]
        assert "døc/中文" in store


def test_writer_rejects_bad_input(tmp_path):
    path = tmp_path / "x.emb"
    ok = DocEmbedding("a", np.ones((2, 4), dtype=np.float32))
    with pytest.raises(ValueError, match="duplicate"):
        write_store([ok, DocEmbedding("a", np.ones((1, 4)))], 4, "t", path)
    with pytest.raises(ValueError, match="expected"):
        write_store([DocEmbedding("b", np.ones((2, 5)))], 4, "t", path)
    with pytest.raises(ValueError, match="empty"):
        write_store([DocEmbedding("b", np.ones((0, 4)))], 4, "t", path)
    with pytest.raises(ValueError, match="non-finite"):
        write_store([DocEmbedding("b", np.full((1, 4), np.nan))], 4, "t", path)
    with pytest.raises(ValueError, match="tag"):
        write_store([ok], 4, "x" * 33, path)


def test_reader_rejects_bad_magic(tmp_path):
    path = tmp_path / "x.emb"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 60)
    with pytest.raises(ValueError, match="bad magic"):
        open_store(path)


def test_reader_rejects_truncated_payload(tmp_path):
    path = tmp_path / "x.emb"
    write_store([DocEmbedding("a", np.ones((3, 8), dtype=np.float32))], 8, "t", path)
    data = path.read_bytes()
    path.write_bytes(data[:-4])  # drop one float32
    with pytest.raises(ValueError, match="truncated"):
        open_store(path)


def test_reader_rejects_truncated_index(tmp_path):
    path = tmp_path / "x.emb"
    write_store([DocEmbedding("a", np.ones((1, 8), dtype=np.float32))], 8, "t", path)
    data = path.read_bytes()
    path.write_bytes(data[: struct.calcsize("<8sIQ") + 32 + 3])
    with pytest.raises(ValueError, match="truncated"):
        open_store(path)


def test_lookup_missing_doc(tmp_path):
    path = tmp_path / "x.emb"
    write_store([DocEmbedding("a", np.ones((1, 8), dtype=np.float32))], 8, "t", path)
    with open_store(path) as store:
        with pytest.raises(KeyError):
            store.lookup("nope")


def test_concurrent_lookups(tmp_path):
    gen = stream(2, "test/store-threads")
    entries = _random_entries(gen, 30, 8)
    path = tmp_path / "x.emb"
    write_store(entries, 8, "t", path)
    with open_store(path) as store:
        expected = {e.doc_id: e.matrix for e in entries}

        def check(doc_id):
            np.testing.assert_array_equal(store.lookup(doc_id), expected[doc_id])
            return doc_id

        ids = [e.doc_id for e in entries] * 8
        with ThreadPoolExecutor(max_workers=8) as pool:
            assert sorted(pool.map(check, ids)) == sorted(ids)


def test_magic_is_stable():
    # on-disk format identity: changing this breaks every existing store
    assert MAGIC == b"HDEMB\x00\x00\x01"
    assert isinstance(StoreProvider, type)


def test_hash_embed_deterministic_unit_norm():
    a = hash_embed(["alpha", "beta"], 32, seed=4)
    b = hash_embed(["alpha", "beta"], 32, seed=4)
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.float32
    assert abs(np.linalg.norm(a) - 1.0) < 1e-6
    assert not np.array_equal(a, hash_embed(["alpha", "gamma"], 32, seed=4))
    assert not np.array_equal(a, hash_embed(["alpha", "beta"], 32, seed=5))


def test_hash_embed_rejects_degenerate_input():
    with pytest.raises(ValueError):
        hash_embed([], 32, seed=0)
    with pytest.raises(ValueError):
        hash_embed(["a"], 4, seed=0)


def _chunked_docs():
    return [
        chunk_document("d0", [f"w{i}" for i in range(45)], 0, 20),
        chunk_document("d1", ["just", "two"], 1, 20),
        chunk_document("d2", [f"v{i}" for i in range(25)], 2, 20),
    ]


def test_hash_provider_rows_match_chunks():
    docs = _chunked_docs()
    provider = HashEmbeddingProvider(docs, dim=16, seed=0)
    for d in docs:
        mat = provider.lookup(d.doc_id)
        assert mat.shape == (d.n_chunks, 16)
        assert provider.n_chunks(d.doc_id) == d.n_chunks
        norms = np.linalg.norm(mat, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)
    with pytest.raises(KeyError):
        provider.lookup("missing")


def test_class_signal_biases_label_coordinate():
    docs = _chunked_docs()
    plain = HashEmbeddingProvider(docs, dim=16, seed=0)
    signed = HashEmbeddingProvider(docs, dim=16, seed=0, class_signal=0.8)
    for d in docs:
        p = plain.lookup(d.doc_id)
        s = signed.lookup(d.doc_id)
        assert not np.array_equal(p, s)
        # label coordinate dominates every chunk vector after injection
        assert (s[:, d.label_id] > 0.4).all()
        np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-6)


def test_store_write_read_hash_provider(tmp_path):
    docs = _chunked_docs()
    provider = HashEmbeddingProvider(docs, dim=16, seed=9, class_signal=0.3)
    path = tmp_path / "hash.emb"
    write_store(provider.materialize(), 16, provider.encoder_tag, path)
    with open_store(path) as store:
        assert store.encoder_tag == provider.encoder_tag
        for d in docs:
            np.testing.assert_array_equal(store.lookup(d.doc_id), provider.lookup(d.doc_id))


def test_verify_store_passes_and_catches_corruption():
    docs = _chunked_docs()
    provider = HashEmbeddingProvider(docs, dim=16, seed=0)
    assert verify_store(docs, provider) == []
    # missing document
    partial = InMemoryProvider(
        {d.doc_id: provider.lookup(d.doc_id) for d in docs[:-1]}, dim=16
    )
    problems = verify_store(docs, partial)
    assert len(problems) == 1 and "missing" in problems[0]
    # row-count corruption
    mats = {d.doc_id: provider.lookup(d.doc_id) for d in docs}
    mats["d0"] = mats["d0"][:1]
    corrupted = InMemoryProvider(mats, dim=16)
    problems = verify_store(docs, corrupted)
    assert len(problems) == 1 and "d0" in problems[0]
