"""Exact-gradient neural building blocks (fp64 throughout)."""

from .layers import (
    Attention,
    BiLSTM,
    Conv1D,
    Dense,
    Dropout,
    LSTM,
    LeakyReLULayer,
    MaxOverTime,
    MaxPool1D,
    Param,
    ReLULayer,
    SigmoidLayer,
    leaky_relu,
    relu,
    sigmoid,
    softmax,
)
from .losses import bce_l2_loss, bce_loss, l2_penalty
from .optim import Adam
from .gradcheck import grad_check

__all__ = [
    "Adam",
    "Attention",
    "BiLSTM",
    "Conv1D",
    "Dense",
    "Dropout",
    "LSTM",
    "LeakyReLULayer",
    "MaxOverTime",
    "MaxPool1D",
    "Param",
    "ReLULayer",
    "SigmoidLayer",
    "bce_l2_loss",
    "bce_loss",
    "grad_check",
    "l2_penalty",
    "leaky_relu",
    "relu",
    "sigmoid",
    "softmax",
]
