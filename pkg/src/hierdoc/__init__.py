"""Hierarchical long-document classification toolkit.

Documents are cleaned, split into fixed-size word chunks, each chunk is
mapped to a frozen sentence embedding, and a shallow trainable head
(BiLSTM or CNN stack, implemented from scratch on numpy) classifies the
sequence of chunk embeddings.
"""

__version__ = "0.1.0"
