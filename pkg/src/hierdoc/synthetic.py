"""Synthetic corpora for encoder-free end-to-end tests.

Documents are random token sequences; pairing them with a hash
embedding provider whose class_signal > 0 yields a linearly separable
classification task by construction, so heads can be exercised (and
their learning verified) without any real dataset or encoder.
"""

from __future__ import annotations

from .chunker import ChunkedDocument, chunk_document
from .corpus import Corpus, DatasetManifest, LabeledDocument
from .embedstore import HashEmbeddingProvider
from .rng import stream
from .textprep import tokenize


def make_synthetic_corpus(
    n_train: int = 200,
    n_test: int = 100,
    num_classes: int = 4,
    seed: int = 0,
    chunk_size: int = 20,
    max_chunks: int = 64,
    vocab_size: int = 200,
    min_words: int = 30,
    max_words: int = 120,
) -> tuple[Corpus, list[ChunkedDocument]]:
    """Random balanced corpus: labels round-robin, words uniform over a
    small vocabulary, lengths uniform in [min_words, max_words]."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    gen = stream(seed, "synthetic/docs")
    vocab = [f"tok{i}" for i in range(vocab_size)]
    documents: list[LabeledDocument] = []
    chunked: list[ChunkedDocument] = []
    total_words = 0
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            label_id = i % num_classes
            n_words = int(gen.integers(min_words, max_words + 1))
            total_words += n_words
            words = [vocab[int(w)] for w in gen.integers(0, vocab_size, size=n_words)]
            doc_id = f"syn-{split}-{i:04d}"
            text = " ".join(words)
            documents.append(LabeledDocument(doc_id, text, label_id, split))
            chunked.append(
                chunk_document(doc_id, tokenize(text), label_id, chunk_size, max_chunks, split)
            )
    manifest = DatasetManifest(
        name="synthetic",
        num_classes=num_classes,
        class_names=[f"class{i}" for i in range(num_classes)],
        avg_words=max(1, total_words // max(1, n_train + n_test)),
        default_chunk_size=chunk_size,
        canonical_split=True,
        train_count=n_train,
        test_count=n_test,
    )
    return Corpus(manifest, documents), chunked


def synthetic_provider(
    chunked: list[ChunkedDocument],
    dim: int,
    seed: int = 0,
    class_signal: float = 0.0,
) -> HashEmbeddingProvider:
    """Hash-embedding provider over synthetic chunks; class_signal > 0
    injects a per-class direction, making the task separable."""
    return HashEmbeddingProvider(chunked, dim=dim, seed=seed, class_signal=class_signal)
