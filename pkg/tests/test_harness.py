"""Training harness: config validation, metrics math, batching,
evaluation purity, the results table, and an end-to-end experiment run."""

from __future__ import annotations

import json

import numpy as np
import pytest

from hierdoc.harness import (
    Metrics,
    TrainConfig,
    TrainReport,
    compute_metrics,
    default_input_dim,
    emit_table,
    evaluate,
    load_reference,
    predictions_to_csv,
    run_experiment,
    train,
    _make_batches,
)
from hierdoc.rng import stream
from hierdoc.synthetic import make_synthetic_corpus, synthetic_provider

# fast-converging setup shared by the smoke tests below
_SIGNAL = 0.8
_DIM = 64


def _tiny_problem(n_train=60, n_test=24, seed=0):
    corpus, chunked = make_synthetic_corpus(
        n_train=n_train, n_test=n_test, num_classes=4, seed=seed
    )
    provider = synthetic_provider(chunked, dim=_DIM, seed=seed, class_signal=_SIGNAL)
    return corpus, provider


# --------------------------------------------------------------- config


def test_config_validation():
    TrainConfig(model_name="flat_mean")  # valid baseline
    with pytest.raises(ValueError):
        TrainConfig(model_name="nope")
    with pytest.raises(ValueError):
        TrainConfig(model_name="flat_mean", chunk_size=30)
    with pytest.raises(ValueError):
        TrainConfig(model_name="flat_mean", lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(model_name="flat_mean", epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(model_name="flat_mean", val_fraction=0.9)
    with pytest.raises(ValueError):
        TrainConfig(model_name="flat_mean", batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(model_name="flat_mean", max_chunks=0)


def test_config_from_dict_ignores_unknown_keys():
    cfg = TrainConfig.from_dict(
        {"model_name": "use_cnn", "lr": 0.01, "dataset_csv": "ignored.csv"}
    )
    assert cfg.model_name == "use_cnn"
    assert cfg.lr == 0.01


def test_default_input_dim():
    assert default_input_dim("use_lstm") == 512
    assert default_input_dim("use_cnn") == 512
    assert default_input_dim("bert_lstm") == 768
    assert default_input_dim("bert_cnn") == 768
    assert default_input_dim("flat_mean") == 512


# -------------------------------------------------------------- metrics


def test_compute_metrics_hand_example():
    y_true = np.array([0, 0, 1, 1])
    y_pred = np.array([0, 1, 1, 1])
    m = compute_metrics(y_true, y_pred, num_classes=2, loss=0.5)
    assert m.accuracy == 0.75
    assert m.loss == 0.5
    # class 0: predicted once, correctly -> precision 1, recall 1/2
    assert m.per_class_precision[0] == 1.0
    assert m.per_class_recall[0] == 0.5
    # class 1: predicted 3 times, 2 correct -> precision 2/3, recall 1
    assert abs(m.per_class_precision[1] - 2 / 3) < 1e-12
    assert m.per_class_recall[1] == 1.0
    np.testing.assert_array_equal(m.confusion, [[1, 1], [0, 2]])


def test_confusion_rows_sum_to_class_counts():
    gen = stream(0, "test/harness")
    y_true = gen.integers(0, 4, size=100)
    y_pred = gen.integers(0, 4, size=100)
    m = compute_metrics(y_true, y_pred, num_classes=4)
    conf = np.asarray(m.confusion)
    np.testing.assert_array_equal(conf.sum(axis=1), np.bincount(y_true, minlength=4))
    assert conf.sum() == 100


def test_metrics_zero_denominators_are_zero():
    # class 1 never predicted and never true -> precision/recall 0, not NaN
    m = compute_metrics(np.array([0, 0]), np.array([0, 0]), num_classes=2)
    assert m.per_class_precision[1] == 0.0
    assert m.per_class_recall[1] == 0.0


def test_metrics_to_dict_shape():
    m = compute_metrics(np.array([0, 1]), np.array([0, 1]), num_classes=2, loss=0.1)
    d = m.to_dict()
    assert d["accuracy"] == 1.0
    assert set(d["per_class"]) == {"precision", "recall"}
    assert d["confusion"] == [[1, 0], [0, 1]]


# ------------------------------------------------------------- batching


def test_batches_cover_all_indices_once():
    gen = stream(1, "test/harness")
    n_chunks = gen.integers(1, 64, size=57)
    batches = _make_batches(n_chunks, 16, stream(2, "test/harness"))
    seen = np.concatenate(batches)
    assert sorted(seen.tolist()) == list(range(57))
    assert all(len(b) <= 16 for b in batches)


def test_batches_group_similar_lengths():
    gen = stream(3, "test/harness")
    n_chunks = gen.integers(1, 64, size=128)
    batches = _make_batches(n_chunks, 16, stream(4, "test/harness"))
    # each batch spans a narrow band of lengths compared to the corpus
    spans = [n_chunks[b].max() - n_chunks[b].min() for b in batches]
    assert np.mean(spans) < (n_chunks.max() - n_chunks.min()) / 2


def test_batches_deterministic_per_seed():
    n_chunks = stream(5, "test/harness").integers(1, 64, size=40)
    a = _make_batches(n_chunks, 8, stream(9, "test/harness-batch"))
    b = _make_batches(n_chunks, 8, stream(9, "test/harness-batch"))
    assert len(a) == len(b)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


# ------------------------------------------------------------- evaluate


def test_evaluate_is_pure_and_deterministic():
    corpus, provider = _tiny_problem()
    from hierdoc.heads import build_head

    model = build_head("flat_mean", 4, input_dim=_DIM)
    docs = corpus.split_docs("test")
    before = {k: v.copy() for k, v in model.parameters().items()}
    m1, p1 = evaluate(model, docs, provider)
    m2, p2 = evaluate(model, docs, provider)
    assert m1.accuracy == m2.accuracy
    assert [p.pred_label for p in p1] == [p.pred_label for p in p2]
    for k, v in model.parameters().items():
        np.testing.assert_array_equal(v, before[k])
    assert len(p1) == len(docs)
    assert {p.doc_id for p in p1} == {d.doc_id for d in docs}


def test_predictions_csv_format():
    corpus, provider = _tiny_problem()
    from hierdoc.heads import build_head

    model = build_head("flat_mean", 4, input_dim=_DIM)
    _, preds = evaluate(model, corpus.split_docs("test"), provider)
    csv_text = predictions_to_csv(preds)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "doc_id,true_label,pred_label,confidence"
    assert len(lines) == len(preds) + 1
    for line in lines[1:]:
        doc_id, t, p, c = line.split(",")
        assert 0 <= int(t) < 4 and 0 <= int(p) < 4
        assert 0.0 < float(c) <= 1.0


# ----------------------------------------------------------------- train


def test_train_loss_decreases_early():
    corpus, provider = _tiny_problem()
    # val_fraction=0 disables the validation split and with it early stopping
    cfg = TrainConfig(model_name="flat_mean", epochs=5, lr=1e-2, seed=0, val_fraction=0.0)
    report = train(cfg, corpus, provider)
    losses = report.epoch_train_loss
    assert len(losses) == 5
    assert all(losses[i + 1] < losses[i] for i in range(4)), losses


def test_train_is_deterministic():
    corpus, provider = _tiny_problem()
    cfg = TrainConfig(model_name="flat_mean", epochs=3, lr=1e-2, seed=7, val_fraction=0.1)
    r1 = train(cfg, corpus, provider)
    r2 = train(cfg, corpus, provider)
    assert r1.epoch_train_loss == r2.epoch_train_loss
    assert r1.epoch_val_accuracy == r2.epoch_val_accuracy
    assert r1.test_metrics.accuracy == r2.test_metrics.accuracy


def test_train_writes_artifacts(tmp_path):
    corpus, provider = _tiny_problem()
    cfg = TrainConfig(model_name="flat_mean", epochs=2, lr=1e-2, seed=0)
    report = train(cfg, corpus, provider, out_dir=tmp_path)
    ckpt = tmp_path / "flat_mean.ckpt"
    assert ckpt.exists()
    assert report.checkpoint_path == str(ckpt)
    assert (tmp_path / "config.json").exists()
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "predictions.csv").exists()
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["test_metrics"]["accuracy"] == report.test_metrics.accuracy
    # the checkpoint reproduces the reported predictions
    from hierdoc.heads import load_head

    clone = load_head(ckpt)
    metrics, _ = evaluate(clone, corpus.split_docs("test"), provider)
    assert metrics.accuracy == report.test_metrics.accuracy


def test_train_early_stopping_restores_best(tmp_path):
    corpus, provider = _tiny_problem()
    cfg = TrainConfig(
        model_name="flat_mean",
        epochs=30,
        lr=1e-2,
        seed=0,
        val_fraction=0.2,
        early_stop_patience=3,
    )
    report = train(cfg, corpus, provider)
    assert report.best_epoch >= 0
    assert len(report.epoch_val_accuracy) <= 30
    # best recorded val accuracy belongs to the reported best epoch
    assert report.epoch_val_accuracy[report.best_epoch] == max(report.epoch_val_accuracy)


def test_train_rejects_mismatched_provider():
    corpus, _ = _tiny_problem()
    _, chunked = make_synthetic_corpus(n_train=4, n_test=2, num_classes=4, seed=99)
    bad_provider = synthetic_provider(chunked, dim=_DIM, seed=0)
    cfg = TrainConfig(model_name="flat_mean", epochs=1)
    with pytest.raises(ValueError):
        train(cfg, corpus, bad_provider)


# ------------------------------------------------------------ the table


def test_emit_table_header_only_when_empty():
    out = emit_table([], reference=None)
    lines = out.strip().split("\n")
    assert lines[0].startswith("Model")
    assert len(lines) <= 2  # header (+ rule), no data rows


def test_emit_table_reference_grid_values():
    out = emit_table([], reference=load_reference())
    assert "86.45" in out  # sparse-attention baseline on the newsgroup corpus
    assert "94.32" in out  # sparse-attention baseline on the movie-review corpus
    assert "98.43" in out
    assert "81.76" in out
    lines = out.strip().split("\n")
    assert len(lines) == 2 + 9  # header + rule + nine model rows


def test_emit_table_merges_our_results():
    ref = load_reference()
    cfg = TrainConfig(model_name="use_lstm", dataset_name="20ng", epochs=1)
    metrics = Metrics(
        accuracy=0.8342,
        loss=0.5,
        per_class_precision=[0.8],
        per_class_recall=[0.8],
        confusion=np.array([[1]]),
    )
    report = TrainReport(
        config=cfg,
        epoch_train_loss=[1.0],
        epoch_train_accuracy=[0.5],
        epoch_val_accuracy=[0.6],
        best_epoch=0,
        checkpoint_path=None,
        wall_clock_seconds=1.0,
        test_metrics=metrics,
    )
    out = emit_table([report], reference=ref)
    row = next(line for line in out.split("\n") if line.startswith("USE+LSTM"))
    assert "83.42" in row
    assert "81.81" in row  # published number for that cell
    assert "+1.61" in row  # delta vs published


# --------------------------------------------------------- experiments


def test_run_experiment_end_to_end(tmp_path):
    corpus, chunked = make_synthetic_corpus(n_train=40, n_test=16, num_classes=4, seed=1)
    csv_path = tmp_path / "docs.csv"
    rows = ["doc_id,split,label,text"]
    for d in corpus.documents:
        rows.append(f'{d.doc_id},{d.split},{corpus.manifest.class_names[d.label_id]},"{d.raw_text}"')
    csv_path.write_text("\n".join(rows) + "\n")
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "name": "synthetic",
                "num_classes": 4,
                "class_names": corpus.manifest.class_names,
                "avg_words": 75.0,
                "default_chunk_size": 20,
                "canonical_split": "fixed",
            }
        )
    )
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "model_name": "flat_mean",
                "dataset_name": "synthetic",
                "dataset_csv": str(csv_path),
                "manifest": str(manifest_path),
                "hash_dim": _DIM,
                "class_signal": _SIGNAL,
                "epochs": 12,
                "lr": 1e-2,
                "seed": 0,
                "val_fraction": 0.0,
                "out_dir": str(tmp_path / "run"),
            }
        )
    )
    report = run_experiment(config_path)
    assert report.test_metrics.accuracy > 0.5
    assert (tmp_path / "run" / "predictions.csv").exists()
