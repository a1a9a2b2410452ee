"""Frozen sentence encoders behind one batch interface.

Each encoder maps a batch of short texts to a [batch, dim] float32
matrix and never updates its weights. The two production encoders load
heavyweight frameworks lazily so the exporter stays importable without
them; ``debug_stub`` is a dependency-free deterministic encoder for
exercising the pipeline when no weights are available (its vectors
carry no meaning).
"""

from __future__ import annotations

import hashlib
import logging
from typing import Callable, Protocol

import numpy as np

log = logging.getLogger(__name__)

POOLINGS = ("cls", "mean")
BERT_MAX_TOKENS = 512  # sub-word input cap; longer chunks are truncated


class Encoder(Protocol):
    tag: str  # written into the store header
    dim: int

    def encode(self, texts: list[str]) -> np.ndarray: ...


class DebugStubEncoder:
    """Deterministic text-hash vectors, 512-d, unit norm. For pipeline
    tests only — carries no semantics."""

    tag = "debug-stub-512"
    dim = 512

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
            seed = int.from_bytes(digest, "little")
            vec = np.random.Generator(np.random.Philox(seed)).standard_normal(self.dim)
            out[i] = (vec / np.linalg.norm(vec)).astype(np.float32)
        return out


class UseDanEncoder:
    """Universal Sentence Encoder, DAN variant: 512-d vectors at the
    encoder's native norm (not re-normalized)."""

    tag = "use-dan-512"
    dim = 512
    MODULE_URL = "https://tfhub.dev/google/universal-sentence-encoder/4"

    def __init__(self):
        try:
            import tensorflow_hub as hub
        except ImportError as exc:  # pragma: no cover - env dependent
            raise RuntimeError(
                "use_dan needs tensorflow and tensorflow-hub "
                "(pip install 'embexport[use]')"
            ) from exc
        self._model = hub.load(self.MODULE_URL)

    def encode(self, texts: list[str]) -> np.ndarray:  # pragma: no cover - needs weights
        return np.asarray(self._model(texts)).astype(np.float32)


class BertEncoder:
    """bert-base-uncased final hidden states, pooled to one 768-d vector
    per text: the leading classification token by default, or a
    padding-masked mean over sub-words."""

    dim = 768
    MODEL_NAME = "bert-base-uncased"

    def __init__(self, pooling: str = "cls"):
        if pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
        self.pooling = pooling
        self.tag = f"bert-base-uncased-{pooling}"
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - env dependent
            raise RuntimeError(
                "bert_base_uncased needs torch and transformers "
                "(pip install 'embexport[bert]')"
            ) from exc
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(self.MODEL_NAME)
        self._model = AutoModel.from_pretrained(self.MODEL_NAME)
        self._model.eval()

    def encode(self, texts: list[str]) -> np.ndarray:  # pragma: no cover - needs weights
        torch = self._torch
        enc = self._tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=BERT_MAX_TOKENS,
            return_tensors="pt",
            return_overflowing_tokens=False,
        )
        if int(enc["attention_mask"].sum(dim=1).max()) >= BERT_MAX_TOKENS:
            log.warning(
                "chunk exceeded %d sub-words; truncated to the encoder cap",
                BERT_MAX_TOKENS,
            )
        with torch.no_grad():
            hidden = self._model(**enc).last_hidden_state  # [B, S, 768]
        if self.pooling == "cls":
            pooled = hidden[:, 0]
        else:
            mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
        return pooled.cpu().numpy().astype(np.float32)


_FACTORIES: dict[str, Callable[[str], Encoder]] = {
    "use_dan": lambda pooling: UseDanEncoder(),
    "bert_base_uncased": lambda pooling: BertEncoder(pooling),
    "debug_stub": lambda pooling: DebugStubEncoder(),
}


def available_encoders() -> tuple[str, ...]:
    return tuple(_FACTORIES)


def make_encoder(name: str, pooling: str = "cls") -> Encoder:
    factory = _FACTORIES.get(name)
    if factory is None:
        raise ValueError(f"unknown encoder {name!r}; choose from {sorted(_FACTORIES)}")
    if name != "bert_base_uncased" and pooling != "cls":
        raise ValueError(f"pooling applies only to bert_base_uncased, not {name!r}")
    return factory(pooling)
