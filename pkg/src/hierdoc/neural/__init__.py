"""From-scratch neural ops: layers, loss, optimizer, gradient checking.

Only the LSTM recurrence has a JIT-compiled kernel (see kernels.py);
everything else is numpy/BLAS.
"""

from .gradcheck import GradCheckReport, check_gradients
from .kernels import BACKEND, available_backends, lstm_backward, lstm_forward
from .layers import (
    BatchNorm,
    BiLSTM,
    Conv1DSame,
    Dense,
    Dropout,
    GlobalMaxPoolLayer,
    Layer,
    MaxPool1DLayer,
    MeanOverTime,
    global_maxpool,
    maxpool1d,
)
from .loss import softmax, softmax_crossentropy
from .optim import Adam

__all__ = [
    "Adam",
    "BACKEND",
    "BatchNorm",
    "BiLSTM",
    "Conv1DSame",
    "Dense",
    "Dropout",
    "GlobalMaxPoolLayer",
    "GradCheckReport",
    "Layer",
    "MaxPool1DLayer",
    "MeanOverTime",
    "available_backends",
    "check_gradients",
    "global_maxpool",
    "lstm_backward",
    "lstm_forward",
    "maxpool1d",
    "softmax",
    "softmax_crossentropy",
]
