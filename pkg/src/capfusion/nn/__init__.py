"""Minimal float64 neural-network engine: layers, loss, Adam, gradient checks."""

from .gradcheck import GradCheckFailure, GradCheckResult, check_gradients, grad_check, gradient_errors
from .layers import (
    LSTM,
    BatchNorm1D,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    LastStep,
    Layer,
    MaxPool1D,
    NotFittedError,
    ReLU,
    Sequential,
    ShapeError,
    Transpose,
    conv1d_forward,
    layer_forward,
    lstm_forward,
)
from .loss import softmax, softmax_cross_entropy
from .optim import AdamState, adam_step

__all__ = [
    "LSTM", "AdamState", "BatchNorm1D", "Conv1D", "Dense", "Dropout", "Flatten", "GradCheckFailure",
    "GradCheckResult", "LastStep", "Layer", "check_gradients", "MaxPool1D", "NotFittedError", "ReLU", "Sequential", "ShapeError", "Transpose",
    "adam_step", "conv1d_forward", "grad_check", "gradient_errors", "layer_forward", "lstm_forward",
    "softmax", "softmax_cross_entropy",
]
