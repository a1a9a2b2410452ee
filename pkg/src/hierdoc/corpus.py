"""Uniform labeled-document corpora for the six benchmark datasets.

Every dataset is ingested once into a canonical CSV
(``doc_id,split,label,text``); this module loads that format, derives
stratified splits where the source has none, and computes corpus
statistics. Label ids follow the manifest's class-name order, which is
kept alphabetical so ids never depend on source row order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .rng import stream

SPLITS = ("train", "test", "unsplit")
CANONICAL_HEADER = ("doc_id", "split", "label", "text")


@dataclass
class LabeledDocument:
    doc_id: str
    raw_text: str
    label_id: int
    split: str


@dataclass
class DatasetManifest:
    name: str
    num_classes: int
    class_names: list[str]
    avg_words: int
    default_chunk_size: int
    canonical_split: bool
    train_count: int | None = None
    test_count: int | None = None
    notes: str = ""

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"{self.name}: {len(self.class_names)} class names for "
                f"{self.num_classes} classes"
            )
        if not 20 <= self.default_chunk_size <= 50:
            raise ValueError(
                f"{self.name}: default_chunk_size {self.default_chunk_size} "
                "outside [20, 50]"
            )
        if self.avg_words <= 0:
            raise ValueError(f"{self.name}: avg_words must be positive")

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2)
            fh.write("\n")


@dataclass
class Corpus:
    manifest: DatasetManifest
    documents: list[LabeledDocument] = field(default_factory=list)

    def split_docs(self, split: str) -> list[LabeledDocument]:
        return [d for d in self.documents if d.split == split]

    def __len__(self) -> int:
        return len(self.documents)


def load_manifest(name_or_path: str | Path) -> DatasetManifest:
    """Load a manifest by shipped dataset name or by file path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return DatasetManifest.from_json(path)
    ref = resources.files("hierdoc.data").joinpath(f"manifests/{name_or_path}.json")
    if not ref.is_file():
        raise FileNotFoundError(f"no shipped manifest named {name_or_path!r}")
    return DatasetManifest(**json.loads(ref.read_text("utf-8")))


def load_dataset(manifest: DatasetManifest, path: str | Path) -> Corpus:
    """Parse a canonical dataset CSV into a Corpus.

    Raises on a missing file, malformed rows, unknown class names,
    duplicate doc ids, empty input, and (when the manifest pins counts)
    split-count mismatches.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    label_ids = {name: i for i, name in enumerate(manifest.class_names)}
    documents: list[LabeledDocument] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: no records")
        if header != list(CANONICAL_HEADER):
            raise ValueError(f"{path}: unexpected header {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ValueError(f"{path}:{row_no}: expected 4 columns, got {len(row)}")
            doc_id, split, label, text = row
            if split not in SPLITS:
                raise ValueError(f"{path}:{row_no}: unknown split {split!r}")
            if label not in label_ids:
                raise ValueError(f"{path}:{row_no}: unknown class name {label!r}")
            if doc_id in seen:
                raise ValueError(f"{path}:{row_no}: duplicate doc_id {doc_id!r}")
            if not text.strip():
                raise ValueError(f"{path}:{row_no}: empty text")
            seen.add(doc_id)
            documents.append(
                LabeledDocument(
                    doc_id=doc_id, raw_text=text, label_id=label_ids[label], split=split
                )
            )
    if not documents:
        raise ValueError(f"{path}: no records")
    corpus = Corpus(manifest=manifest, documents=documents)
    if manifest.canonical_split:
        _check_counts(corpus)
    return corpus


def _check_counts(corpus: Corpus) -> None:
    manifest = corpus.manifest
    n_train = len(corpus.split_docs("train"))
    n_test = len(corpus.split_docs("test"))
    if manifest.train_count is not None and n_train != manifest.train_count:
        raise ValueError(
            f"{manifest.name}: expected {manifest.train_count} train records, "
            f"got {n_train}"
        )
    if manifest.test_count is not None and n_test != manifest.test_count:
        raise ValueError(
            f"{manifest.name}: expected {manifest.test_count} test records, "
            f"got {n_test}"
        )


def save_dataset(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to the canonical CSV format."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "split", "label", "text"])
        for doc in corpus.documents:
            writer.writerow(
                [
                    doc.doc_id,
                    doc.split,
                    corpus.manifest.class_names[doc.label_id],
                    doc.raw_text,
                ]
            )


def stratified_split(corpus: Corpus, train_fraction: float, seed: int) -> Corpus:
    """Assign train/test per class, floor(train_fraction * class_count) to
    train, deterministically for a fixed seed.

    Every class keeps at least one document on each side; classes with
    fewer than two documents are an error.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if any(d.split == "test" for d in corpus.documents):
        raise ValueError("corpus already carries test assignments")
    by_class: dict[int, list[int]] = {}
    for idx, doc in enumerate(corpus.documents):
        by_class.setdefault(doc.label_id, []).append(idx)
    assignment = ["train"] * len(corpus.documents)
    for label_id in sorted(by_class):
        indices = by_class[label_id]
        if len(indices) < 2:
            raise ValueError(
                f"class {corpus.manifest.class_names[label_id]!r} has "
                f"{len(indices)} document(s); need at least 2 to split"
            )
        rng = stream(seed, f"split/class{label_id}")
        order = rng.permutation(len(indices))
        n_train = math.floor(train_fraction * len(indices))
        n_train = min(max(n_train, 1), len(indices) - 1)
        for rank, pos in enumerate(order):
            assignment[indices[pos]] = "train" if rank < n_train else "test"
    documents = [
        LabeledDocument(d.doc_id, d.raw_text, d.label_id, assignment[i])
        for i, d in enumerate(corpus.documents)
    ]
    return Corpus(manifest=corpus.manifest, documents=documents)


def corpus_stats(corpus: Corpus) -> dict:
    """Whitespace-token statistics plus the class histogram."""
    if not corpus.documents:
        raise ValueError("empty corpus")
    counts = [len(d.raw_text.split()) for d in corpus.documents]
    histogram = [0] * corpus.manifest.num_classes
    for doc in corpus.documents:
        histogram[doc.label_id] += 1
    return {
        "avg_words": sum(counts) / len(counts),
        "max_words": max(counts),
        "class_histogram": histogram,
    }
