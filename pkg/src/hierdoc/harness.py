"""Training loop, evaluation, metrics, and results-table rendering.

Everything here is deterministic in (config, seed): shuffling, the
validation split, and dropout all draw from named RNG streams, so a
rerun reproduces per-epoch losses bitwise.

Defaults the source material leaves unspecified (optimizer, lr, batch
size, epochs, early stopping, validation fraction) are centralized in
TrainConfig.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .chunker import CHUNK_SIZES, chunk_document
from .corpus import Corpus, load_dataset, load_manifest, stratified_split
from .embedstore import EmbeddingProvider, HashEmbeddingProvider, open_store, verify_store
from .heads import HEAD_NAMES, HeadModel, build_head
from .neural.loss import softmax, softmax_crossentropy
from .neural.optim import Adam
from .rng import stream
from .textprep import preprocess, tokenize

__all__ = [
    "Metrics",
    "Prediction",
    "TrainConfig",
    "TrainReport",
    "compute_metrics",
    "default_input_dim",
    "emit_table",
    "evaluate",
    "load_reference",
    "predictions_to_csv",
    "run_experiment",
    "train",
]


def default_input_dim(model_name: str) -> int:
    return 768 if model_name.startswith("bert_") else 512


@dataclass
class TrainConfig:
    model_name: str
    dataset_name: str = "synthetic"
    chunk_size: int = 20
    max_chunks: int = 64
    batch_size: int = 32
    epochs: int = 30
    lr: float = 1e-3
    seed: int = 0
    early_stop_patience: int = 5
    val_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.model_name not in HEAD_NAMES:
            raise ValueError(f"unknown model {self.model_name!r}; choose from {HEAD_NAMES}")
        if self.chunk_size not in CHUNK_SIZES:
            raise ValueError(
                f"chunk_size must be one of {sorted(CHUNK_SIZES)}, got {self.chunk_size}"
            )
        if self.max_chunks < 1:
            raise ValueError(f"max_chunks must be >= 1, got {self.max_chunks}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.val_fraction < 0.5:
            raise ValueError(f"val_fraction must be in [0, 0.5), got {self.val_fraction}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.early_stop_patience < 1:
            raise ValueError(
                f"early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class Metrics:
    accuracy: float
    loss: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    confusion: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "loss": self.loss,
            "per_class": {
                "precision": self.per_class_precision,
                "recall": self.per_class_recall,
            },
            "confusion": self.confusion,
        }


@dataclass
class Prediction:
    doc_id: str
    true_label: str
    pred_label: str
    confidence: float


@dataclass
class TrainReport:
    config: TrainConfig
    epoch_train_loss: list[float] = field(default_factory=list)
    epoch_train_accuracy: list[float] = field(default_factory=list)
    epoch_val_accuracy: list[float | None] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint_path: str | None = None
    wall_clock_seconds: float = 0.0
    test_metrics: Metrics | None = None
    model: HeadModel | None = None  # not serialized

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "epoch_train_loss": self.epoch_train_loss,
            "epoch_train_accuracy": self.epoch_train_accuracy,
            "epoch_val_accuracy": self.epoch_val_accuracy,
            "best_epoch": self.best_epoch,
            "checkpoint_path": self.checkpoint_path,
            "wall_clock_seconds": self.wall_clock_seconds,
            "test_metrics": self.test_metrics.to_dict() if self.test_metrics else None,
        }


def compute_metrics(
    y_true: Sequence[int], y_pred: Sequence[int], num_classes: int, loss: float = 0.0
) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred length mismatch")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    total = conf.sum()
    diag = np.diag(conf).astype(np.float64)
    col = conf.sum(axis=0).astype(np.float64)
    row = conf.sum(axis=1).astype(np.float64)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    return Metrics(
        accuracy=float(diag.sum() / total) if total else 0.0,
        loss=float(loss),
        per_class_precision=[float(p) for p in precision],
        per_class_recall=[float(r) for r in recall],
        confusion=[[int(v) for v in r_] for r_ in conf],
    )


# -- batching ----------------------------------------------------------------


def _pad_batch(
    provider: EmbeddingProvider, pairs: Sequence[tuple[str, int]], dtype=np.float32
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack embedding matrices into [B, T_max, dim] with zero padding.
    Returns (x, lengths, labels)."""
    mats = [provider.lookup(doc_id) for doc_id, _ in pairs]
    lengths = np.array([m.shape[0] for m in mats], dtype=np.int64)
    t_max = int(lengths.max())
    x = np.zeros((len(mats), t_max, provider.dim), dtype=dtype)
    for i, m in enumerate(mats):
        x[i, : m.shape[0]] = m
    labels = np.array([label for _, label in pairs], dtype=np.int64)
    return x, lengths, labels


def _make_batches(
    n_chunks: np.ndarray, batch_size: int, gen: np.random.Generator
) -> list[np.ndarray]:
    """Shuffled, length-bucketed batches: random permutation, stable sort
    by chunk count (so similarly sized docs share a batch and padding
    stays bounded), consecutive slices, then shuffled batch order."""
    n = len(n_chunks)
    perm = gen.permutation(n)
    order = perm[np.argsort(n_chunks[perm], kind="stable")]
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    return [batches[i] for i in gen.permutation(len(batches))]


# -- evaluation ---------------------------------------------------------------


def evaluate(
    model: HeadModel,
    docs: Sequence,
    provider: EmbeddingProvider,
    class_names: Sequence[str] | None = None,
    batch_size: int = 64,
) -> tuple[Metrics, list[Prediction]]:
    """Eval-mode metrics plus per-document predictions, in input order.
    ``docs`` needs .doc_id and .label_id attributes per item."""
    if not docs:
        raise ValueError("no documents to evaluate")
    names = (
        list(class_names)
        if class_names is not None
        else [str(i) for i in range(model.num_classes)]
    )
    pairs = [(d.doc_id, d.label_id) for d in docs]
    y_true: list[int] = []
    y_pred: list[int] = []
    predictions: list[Prediction] = []
    loss_sum = 0.0
    for start in range(0, len(pairs), batch_size):
        part = pairs[start : start + batch_size]
        x, lengths, labels = _pad_batch(provider, part, dtype=model.dtype)
        logits = model.forward(x, lengths, training=False)
        loss, _ = softmax_crossentropy(logits, labels)
        loss_sum += loss * len(part)
        probs = softmax(logits)
        preds = np.argmax(logits, axis=1)
        for (doc_id, label), pred, prob in zip(part, preds, probs):
            predictions.append(
                Prediction(doc_id, names[label], names[int(pred)], float(prob[int(pred)]))
            )
        y_true.extend(labels.tolist())
        y_pred.extend(int(p) for p in preds)
    metrics = compute_metrics(y_true, y_pred, model.num_classes, loss_sum / len(pairs))
    return metrics, predictions


def predictions_to_csv(predictions: Sequence[Prediction]) -> str:
    lines = ["doc_id,true_label,pred_label,confidence"]
    for p in predictions:
        lines.append(f"{p.doc_id},{p.true_label},{p.pred_label},{p.confidence:.6f}")
    return "\n".join(lines) + "\n"


# -- training ------------------------------------------------------------------


def _stratified_val_split(
    pairs: list[tuple[str, int]], val_fraction: float, seed: int
) -> tuple[list[tuple[str, int]], list[tuple[str, int]]]:
    if val_fraction <= 0.0:
        return pairs, []
    by_class: dict[int, list[int]] = {}
    for i, (_, label) in enumerate(pairs):
        by_class.setdefault(label, []).append(i)
    val_idx: set[int] = set()
    for label in sorted(by_class):
        idxs = by_class[label]
        gen = stream(seed, f"val-split/class{label}")
        perm = gen.permutation(len(idxs))
        n_val = int(val_fraction * len(idxs))
        val_idx.update(idxs[perm[k]] for k in range(n_val))
    train_part = [p for i, p in enumerate(pairs) if i not in val_idx]
    val_part = [p for i, p in enumerate(pairs) if i in val_idx]
    return train_part, val_part


def _eval_accuracy(
    model: HeadModel,
    pairs: list[tuple[str, int]],
    provider: EmbeddingProvider,
    batch_size: int,
) -> float:
    correct = 0
    for start in range(0, len(pairs), batch_size):
        part = pairs[start : start + batch_size]
        x, lengths, labels = _pad_batch(provider, part, dtype=model.dtype)
        preds = model.predict(x, lengths)
        correct += int((preds == labels).sum())
    return correct / len(pairs)


def _snapshot(model: HeadModel) -> dict[str, np.ndarray]:
    state = {k: v.copy() for k, v in model.parameters().items()}
    state.update({f"buf::{k}": v.copy() for k, v in model.buffers().items()})
    return state


def _restore(model: HeadModel, state: dict[str, np.ndarray]) -> None:
    for k, v in model.parameters().items():
        v[...] = state[k]
    for k, v in model.buffers().items():
        v[...] = state[f"buf::{k}"]


def train(
    config: TrainConfig,
    corpus: Corpus,
    provider: EmbeddingProvider,
    out_dir: str | Path | None = None,
) -> TrainReport:
    """Train a head on the corpus's train split; keep the best-validation
    checkpoint; evaluate on the test split when present."""
    t0 = time.perf_counter()
    num_classes = corpus.manifest.num_classes
    model = build_head(
        config.model_name, num_classes, seed=config.seed, input_dim=provider.dim
    )
    if provider.dim != model.input_dim:
        raise ValueError(
            f"provider dim {provider.dim} != {config.model_name} input dim {model.input_dim}"
        )
    train_docs = corpus.split_docs("train")
    if not train_docs:
        raise ValueError("train split is empty")
    seen_classes = {d.label_id for d in train_docs}
    missing = sorted(set(range(num_classes)) - seen_classes)
    if missing:
        names = [corpus.manifest.class_names[i] for i in missing]
        raise ValueError(f"empty class(es) in train split: {names}")
    absent = [d.doc_id for d in corpus.documents if d.doc_id not in provider]
    if absent:
        raise ValueError(f"embeddings missing for {len(absent)} docs, e.g. {absent[:3]}")

    all_train = [(d.doc_id, d.label_id) for d in train_docs]
    fit_pairs, val_pairs = _stratified_val_split(all_train, config.val_fraction, config.seed)
    counts = np.array([provider.n_chunks(doc_id) for doc_id, _ in fit_pairs], dtype=np.int64)

    optimizer = Adam(model.parameters(), lr=config.lr)
    report = TrainReport(config=config)
    best_state: dict[str, np.ndarray] | None = None
    best_val = -1.0
    stale = 0
    for epoch in range(config.epochs):
        gen = stream(config.seed, f"shuffle/epoch{epoch}")
        loss_sum = 0.0
        for batch in _make_batches(counts, config.batch_size, gen):
            part = [fit_pairs[i] for i in batch]
            x, lengths, labels = _pad_batch(provider, part, dtype=model.dtype)
            logits = model.forward(x, lengths, training=True)
            loss, dlogits = softmax_crossentropy(logits, labels)
            model.backward(dlogits)
            optimizer.step(model.gradients())
            loss_sum += loss * len(part)
        report.epoch_train_loss.append(loss_sum / len(fit_pairs))
        report.epoch_train_accuracy.append(
            _eval_accuracy(model, fit_pairs, provider, config.batch_size)
        )
        if val_pairs:
            val_acc = _eval_accuracy(model, val_pairs, provider, config.batch_size)
            report.epoch_val_accuracy.append(val_acc)
            if val_acc > best_val:
                best_val = val_acc
                best_state = _snapshot(model)
                report.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
        else:
            report.epoch_val_accuracy.append(None)
            report.best_epoch = epoch
    if best_state is not None:
        _restore(model, best_state)
    report.model = model

    test_docs = corpus.split_docs("test")
    predictions: list[Prediction] = []
    if test_docs:
        report.test_metrics, predictions = evaluate(
            model, test_docs, provider, corpus.manifest.class_names, config.batch_size
        )
    report.wall_clock_seconds = time.perf_counter() - t0

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / f"{config.model_name}.ckpt"
        model.save(ckpt)
        report.checkpoint_path = str(ckpt)
        (out / "config.json").write_text(
            json.dumps(asdict(config), indent=2) + "\n", encoding="utf-8"
        )
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        if predictions:
            (out / "predictions.csv").write_text(
                predictions_to_csv(predictions), encoding="utf-8"
            )
    return report


# -- results table -------------------------------------------------------------


def load_reference(path: str | Path | None = None) -> dict:
    """Published accuracy grid; ships with the package."""
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    ref = resources.files("hierdoc.data").joinpath("reference_accuracy.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def emit_table(reports: Sequence[TrainReport], reference: dict | None = None) -> str:
    """Render accuracy as an ASCII grid: rows = models, columns =
    datasets, cells = accuracy x 100 at 2 decimals. With a reference
    grid, our runs render as "ours (ref R, D)" next to the published
    value; reference-only cells show the published number."""
    models: list[str] = list(reference["models"]) if reference else []
    datasets: list[str] = list(reference["datasets"]) if reference else []
    model_keys = dict(reference.get("model_keys", {})) if reference else {}
    dataset_keys = dict(reference.get("dataset_keys", {})) if reference else {}
    ref_acc = reference.get("accuracy", {}) if reference else {}

    ours: dict[tuple[str, str], float] = {}
    for rpt in reports:
        if rpt.test_metrics is None:
            continue
        m = model_keys.get(rpt.config.model_name, rpt.config.model_name)
        d = dataset_keys.get(rpt.config.dataset_name, rpt.config.dataset_name)
        if m not in models:
            models.append(m)
        if d not in datasets:
            datasets.append(d)
        ours[(m, d)] = rpt.test_metrics.accuracy * 100.0

    def cell(m: str, d: str) -> str:
        ref_v = ref_acc.get(m, {}).get(d)
        our_v = ours.get((m, d))
        if our_v is not None and ref_v is not None:
            return f"{our_v:.2f} (ref {ref_v:.2f}, {our_v - ref_v:+.2f})"
        if our_v is not None:
            return f"{our_v:.2f}"
        if ref_v is not None:
            return f"{ref_v:.2f}"
        return "-"

    grid = [[cell(m, d) for d in datasets] for m in models]
    widths = [
        max([len(d)] + [len(row[j]) for row in grid]) if grid else len(d)
        for j, d in enumerate(datasets)
    ]
    name_w = max([len("Model")] + [len(m) for m in models])
    header = " | ".join(["Model".ljust(name_w)] + [d.ljust(w) for d, w in zip(datasets, widths)])
    sep = "-+-".join(["-" * name_w] + ["-" * w for w in widths])
    lines = [header.rstrip(), sep]
    for m, row in zip(models, grid):
        line = " | ".join([m.ljust(name_w)] + [c.ljust(w) for c, w in zip(row, widths)])
        lines.append(line.rstrip())
    return "\n".join(lines) + "\n"


# -- end-to-end ----------------------------------------------------------------


def run_experiment(config_path: str | Path) -> TrainReport:
    """Full pipeline from a run.json: load CSV -> preprocess -> chunk ->
    embeddings (store file or hash) -> train -> evaluate.

    Beyond TrainConfig fields, the file may carry: dataset_csv (required),
    manifest (name or path; defaults to dataset_name), store (embedding
    store path), hash_dim / class_signal (hash embedder fallback),
    train_fraction (for unsplit corpora), out_dir.
    """
    with open(config_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    config = TrainConfig.from_dict(raw)
    manifest = load_manifest(raw.get("manifest", config.dataset_name))
    corpus = load_dataset(manifest, raw["dataset_csv"])
    if any(d.split == "unsplit" for d in corpus.documents):
        corpus = stratified_split(corpus, raw.get("train_fraction", 0.8), config.seed)
    chunked = [
        chunk_document(
            d.doc_id,
            tokenize(preprocess(d.raw_text)),
            d.label_id,
            config.chunk_size,
            config.max_chunks,
            d.split,
        )
        for d in corpus.documents
    ]
    if "store" in raw:
        provider: EmbeddingProvider = open_store(raw["store"])
    else:
        provider = HashEmbeddingProvider(
            chunked,
            dim=raw.get("hash_dim", default_input_dim(config.model_name)),
            seed=config.seed,
            class_signal=raw.get("class_signal", 0.0),
        )
    problems = verify_store(chunked, provider)
    if problems:
        raise ValueError(
            f"embeddings do not match chunks ({len(problems)} problems), "
            f"e.g. {problems[:3]}"
        )
    return train(config, corpus, provider, out_dir=raw.get("out_dir"))
