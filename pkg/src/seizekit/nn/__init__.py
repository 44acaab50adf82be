"""Small numpy neural-network engine with tape-based reverse-mode gradients."""

from . import functional
from .evaluation import balanced_accuracy, binary_report, class_weights, ece
from .layers import multi_head_attention, transformer_block
from .losses import bm_loss, softmax_loss
from .optim import ModelParams, TrainConfig, adam_step
from .tensor import NonFiniteError, Tape, Tensor

__all__ = [
    "functional",
    "Tensor",
    "Tape",
    "NonFiniteError",
    "ModelParams",
    "TrainConfig",
    "adam_step",
    "softmax_loss",
    "bm_loss",
    "multi_head_attention",
    "transformer_block",
    "class_weights",
    "ece",
    "binary_report",
    "balanced_accuracy",
]
