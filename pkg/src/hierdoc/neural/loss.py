"""Softmax cross-entropy with a fused, numerically stable gradient."""

from __future__ import annotations

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_crossentropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over the batch.

    Returns (loss, dloss/dlogits) where dlogits = (softmax - onehot)/B;
    log-sum-exp keeps everything finite for |logits| up to ~1e3.
    """
    if logits.ndim != 2:
        raise ValueError(f"expected [B, C] logits, got shape {logits.shape}")
    B, C = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError("label out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(B)
    loss = float(-logp[rows, labels].mean())
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= B
    return loss, dlogits.astype(logits.dtype)
