"""Trainable classification heads over chunk-embedding sequences.

Five stacks: two over 512-d embeddings (use_lstm, use_cnn), two over
768-d embeddings (bert_lstm, bert_cnn), and flat_mean, an order-
invariant mean-embedding baseline. All consume [B, T, D] batches with
per-row valid lengths (rows zero-padded to T) and emit raw logits;
softmax lives in the loss.

Checkpoints are a single binary file: u64-LE length-prefixed JSON
header (stack description + tensor manifest) followed by the tensors
as little-endian float32 in manifest order.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .neural.layers import (
    BatchNorm,
    BiLSTM,
    Conv1DSame,
    Dense,
    Dropout,
    GlobalMaxPoolLayer,
    Layer,
    MaxPool1DLayer,
    MeanOverTime,
)
from .rng import stream

HEAD_NAMES = ("use_lstm", "use_cnn", "bert_lstm", "bert_cnn", "flat_mean")

_CHECKPOINT_VERSION = 1


class HeadModel:
    def __init__(
        self,
        name: str,
        input_dim: int,
        num_classes: int,
        layers: list[Layer],
        dtype=np.float32,
    ):
        self.name = name
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.layers = layers
        self.dtype = np.dtype(dtype)

    # -- forward / backward -------------------------------------------------

    def forward(
        self,
        x: np.ndarray,
        lengths: np.ndarray | None = None,
        training: bool = False,
    ) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3:
            raise ValueError(f"expected [B, T, D] input, got shape {x.shape}")
        B, T, D = x.shape
        if D != self.input_dim:
            raise ValueError(f"{self.name} expects dim {self.input_dim}, got {D}")
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        else:
            lengths = np.asarray(lengths, dtype=np.int64)
            if lengths.shape != (B,):
                raise ValueError(f"lengths shape {lengths.shape} != ({B},)")
            if lengths.min() < 1 or lengths.max() > T:
                raise ValueError("lengths must satisfy 1 <= len <= T")
        # guarantee the zero-at-masked-positions invariant at the door
        mask = np.arange(T)[None, :] < lengths[:, None]
        h = x * mask[:, :, None]
        cur: np.ndarray | None = lengths
        for layer in self.layers:
            h, cur = layer.forward(h, cur, training)
        return h

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        g = np.asarray(dlogits, dtype=self.dtype)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict(self, x: np.ndarray, lengths: np.ndarray | None = None) -> np.ndarray:
        """Argmax class ids (lowest index wins ties), eval mode."""
        return np.argmax(self.forward(x, lengths, training=False), axis=1)

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            f"{layer.name}/{key}": arr
            for layer in self.layers
            for key, arr in layer.params.items()
        }

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            f"{layer.name}/{key}": arr
            for layer in self.layers
            for key, arr in layer.grads.items()
        }

    def buffers(self) -> dict[str, np.ndarray]:
        return {
            f"{layer.name}/{key}": arr
            for layer in self.layers
            for key, arr in layer.buffers.items()
        }

    def num_params(self) -> int:
        return sum(layer.num_params() for layer in self.layers)

    def set_dropout_frozen(self, seed: int | None) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.fixed_mask_seed = seed

    def set_backend(self, backend: str | None) -> None:
        for layer in self.layers:
            if isinstance(layer, BiLSTM):
                layer.backend = backend

    # -- checkpoint ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        manifest = []
        blobs = []
        for layer in self.layers:
            for role, table in (("param", layer.params), ("buffer", layer.buffers)):
                for key, arr in table.items():
                    manifest.append(
                        {
                            "layer": layer.name,
                            "tensor": key,
                            "role": role,
                            "shape": list(arr.shape),
                        }
                    )
                    blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        header = {
            "format_version": _CHECKPOINT_VERSION,
            "kind": "hierdoc-head",
            "name": self.name,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "layers": [
                {"kind": layer.kind, "name": layer.name, "config": layer.config()}
                for layer in self.layers
            ],
            "tensors": manifest,
        }
        payload = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            fh.writelines(blobs)


_LAYER_BUILDERS = {
    "dense": lambda cfg, name, rng, dtype: Dense(
        cfg["in_dim"], cfg["units"], cfg["activation"], name=name, rng=rng, dtype=dtype
    ),
    "conv1d": lambda cfg, name, rng, dtype: Conv1DSame(
        cfg["in_channels"], cfg["filters"], cfg["kernel_size"], name=name, rng=rng, dtype=dtype
    ),
    "bilstm": lambda cfg, name, rng, dtype: BiLSTM(
        cfg["in_dim"], cfg["units"], name=name, rng=rng, dtype=dtype
    ),
    "maxpool1d": lambda cfg, name, rng, dtype: MaxPool1DLayer(cfg["pool_size"], name=name),
    "global_maxpool": lambda cfg, name, rng, dtype: GlobalMaxPoolLayer(name=name),
    "mean_over_time": lambda cfg, name, rng, dtype: MeanOverTime(name=name),
    "dropout": lambda cfg, name, rng, dtype: Dropout(cfg["rate"], name=name, rng=rng),
    "batchnorm": lambda cfg, name, rng, dtype: BatchNorm(
        cfg["dim"], cfg["momentum"], cfg["eps"], name=name, dtype=dtype
    ),
}


def load_head(path: str | Path, dtype=np.float32) -> HeadModel:
    file_size = os.path.getsize(path)
    with open(path, "rb") as fh:
        raw = fh.read(8)
        if len(raw) < 8:
            raise ValueError(f"{path}: truncated checkpoint")
        (hlen,) = struct.unpack("<Q", raw)
        if hlen > file_size - 8:
            raise ValueError(f"{path}: header length {hlen} exceeds file size")
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: unreadable checkpoint header: {exc}") from exc
        if header.get("kind") != "hierdoc-head":
            raise ValueError(f"{path}: not a head checkpoint")
        if header.get("format_version") != _CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported version {header.get('format_version')}")
        layers = []
        for spec in header["layers"]:
            builder = _LAYER_BUILDERS.get(spec["kind"])
            if builder is None:
                raise ValueError(f"{path}: unknown layer kind {spec['kind']!r}")
            rng = stream(0, f"checkpoint-load/{spec['name']}")  # values overwritten below
            layers.append(builder(spec["config"], spec["name"], rng, dtype))
        model = HeadModel(
            header["name"], header["input_dim"], header["num_classes"], layers, dtype
        )
        by_name = {layer.name: layer for layer in model.layers}
        for entry in header["tensors"]:
            layer = by_name[entry["layer"]]
            table = layer.params if entry["role"] == "param" else layer.buffers
            target = table[entry["tensor"]]
            shape = tuple(entry["shape"])
            if target.shape != shape:
                raise ValueError(
                    f"{path}: tensor {entry['layer']}/{entry['tensor']} shape "
                    f"{shape} != expected {target.shape}"
                )
            n = int(np.prod(shape)) if shape else 1
            data = fh.read(n * 4)
            if len(data) < n * 4:
                raise ValueError(f"{path}: truncated tensor data")
            table[entry["tensor"]] = np.frombuffer(data, dtype="<f4").reshape(shape).astype(dtype)
    return model


# -- builders ----------------------------------------------------------------


def _require_classes(num_classes: int) -> None:
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")


def build_use_lstm(num_classes: int, seed: int = 0, dtype=np.float32) -> HeadModel:
    """Two stacked BiLSTMs (256, 128) + global max pool, then two
    relu/dropout(0.4)/batchnorm dense blocks (256, 64) over 512-d input."""
    _require_classes(num_classes)
    r = lambda n: stream(seed, f"init/use_lstm/{n}")  # noqa: E731
    d = lambda n: stream(seed, f"dropout/use_lstm/{n}")  # noqa: E731
    layers = [
        BiLSTM(512, 256, name="00_bilstm", rng=r("00_bilstm"), dtype=dtype),
        BiLSTM(512, 128, name="01_bilstm", rng=r("01_bilstm"), dtype=dtype),
        GlobalMaxPoolLayer(name="02_gmp"),
        Dense(256, 256, "relu", name="03_dense", rng=r("03_dense"), dtype=dtype),
        Dropout(0.4, name="04_dropout", rng=d("04_dropout")),
        BatchNorm(256, name="05_batchnorm", dtype=dtype),
        Dense(256, 64, "relu", name="06_dense", rng=r("06_dense"), dtype=dtype),
        Dropout(0.4, name="07_dropout", rng=d("07_dropout")),
        BatchNorm(64, name="08_batchnorm", dtype=dtype),
        Dense(64, num_classes, "linear", name="09_dense", rng=r("09_dense"), dtype=dtype),
    ]
    return HeadModel("use_lstm", 512, num_classes, layers, dtype)


def build_use_cnn(num_classes: int, seed: int = 0, dtype=np.float32) -> HeadModel:
    """Two conv(512, k=1)/pool(2)/dropout(0.5) blocks + global max pool,
    then tanh dense blocks (1024, 128) with dropout 0.5, over 512-d input."""
    _require_classes(num_classes)
    r = lambda n: stream(seed, f"init/use_cnn/{n}")  # noqa: E731
    d = lambda n: stream(seed, f"dropout/use_cnn/{n}")  # noqa: E731
    layers = [
        Conv1DSame(512, 512, 1, name="00_conv", rng=r("00_conv"), dtype=dtype),
        MaxPool1DLayer(2, name="01_pool"),
        Dropout(0.5, name="02_dropout", rng=d("02_dropout")),
        Conv1DSame(512, 512, 1, name="03_conv", rng=r("03_conv"), dtype=dtype),
        MaxPool1DLayer(2, name="04_pool"),
        Dropout(0.5, name="05_dropout", rng=d("05_dropout")),
        GlobalMaxPoolLayer(name="06_gmp"),
        Dense(512, 1024, "tanh", name="07_dense", rng=r("07_dense"), dtype=dtype),
        Dropout(0.5, name="08_dropout", rng=d("08_dropout")),
        Dense(1024, 128, "tanh", name="09_dense", rng=r("09_dense"), dtype=dtype),
        Dropout(0.5, name="10_dropout", rng=d("10_dropout")),
        Dense(128, num_classes, "linear", name="11_dense", rng=r("11_dense"), dtype=dtype),
    ]
    return HeadModel("use_cnn", 512, num_classes, layers, dtype)


def build_bert_lstm(num_classes: int, seed: int = 0, dtype=np.float32) -> HeadModel:
    """Two stacked BiLSTMs (256, 128) + global max pool + relu dense(64),
    over 768-d input."""
    _require_classes(num_classes)
    r = lambda n: stream(seed, f"init/bert_lstm/{n}")  # noqa: E731
    layers = [
        BiLSTM(768, 256, name="00_bilstm", rng=r("00_bilstm"), dtype=dtype),
        BiLSTM(512, 128, name="01_bilstm", rng=r("01_bilstm"), dtype=dtype),
        GlobalMaxPoolLayer(name="02_gmp"),
        Dense(256, 64, "relu", name="03_dense", rng=r("03_dense"), dtype=dtype),
        Dense(64, num_classes, "linear", name="04_dense", rng=r("04_dense"), dtype=dtype),
    ]
    return HeadModel("bert_lstm", 768, num_classes, layers, dtype)


def build_bert_cnn(num_classes: int, seed: int = 0, dtype=np.float32) -> HeadModel:
    """conv(512, k=3) -> conv(256, k=3) -> global max pool -> relu
    dense(64), over 768-d input."""
    _require_classes(num_classes)
    r = lambda n: stream(seed, f"init/bert_cnn/{n}")  # noqa: E731
    layers = [
        Conv1DSame(768, 512, 3, name="00_conv", rng=r("00_conv"), dtype=dtype),
        Conv1DSame(512, 256, 3, name="01_conv", rng=r("01_conv"), dtype=dtype),
        GlobalMaxPoolLayer(name="02_gmp"),
        Dense(256, 64, "relu", name="03_dense", rng=r("03_dense"), dtype=dtype),
        Dense(64, num_classes, "linear", name="04_dense", rng=r("04_dense"), dtype=dtype),
    ]
    return HeadModel("bert_cnn", 768, num_classes, layers, dtype)


def build_flat_mean(
    input_dim: int, num_classes: int, seed: int = 0, dtype=np.float32
) -> HeadModel:
    """Mean over chunks -> linear classifier; order-invariant baseline."""
    _require_classes(num_classes)
    layers = [
        MeanOverTime(name="00_mean"),
        Dense(
            input_dim,
            num_classes,
            "linear",
            name="01_dense",
            rng=stream(seed, "init/flat_mean/01_dense"),
            dtype=dtype,
        ),
    ]
    return HeadModel("flat_mean", input_dim, num_classes, layers, dtype)


def build_head(
    name: str,
    num_classes: int,
    seed: int = 0,
    dtype=np.float32,
    input_dim: int | None = None,
) -> HeadModel:
    """Build any head by its registry name. input_dim only applies to
    flat_mean (defaults to 512); the other stacks fix their own dims."""
    if name == "use_lstm":
        return build_use_lstm(num_classes, seed, dtype)
    if name == "use_cnn":
        return build_use_cnn(num_classes, seed, dtype)
    if name == "bert_lstm":
        return build_bert_lstm(num_classes, seed, dtype)
    if name == "bert_cnn":
        return build_bert_cnn(num_classes, seed, dtype)
    if name == "flat_mean":
        return build_flat_mean(input_dim if input_dim is not None else 512, num_classes, seed, dtype)
    raise ValueError(f"unknown head {name!r}; choose from {HEAD_NAMES}")
