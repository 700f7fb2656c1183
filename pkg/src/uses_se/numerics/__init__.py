"""Tensor algebra with reverse-mode automatic differentiation."""

from uses_se.numerics.gradcheck import grad_check
from uses_se.numerics.layers import (
    AttentionParams,
    attention_weights,
    conv2d,
    conv_transpose2d,
    layer_norm,
    linear,
    multi_head_attention,
    prelu,
    softmax,
    symmetric_mean,
)
from uses_se.numerics.tensor import Tape, Tensor, backward, concat, is_recording, stack, tensor

__all__ = [
    "AttentionParams",
    "Tape",
    "Tensor",
    "attention_weights",
    "backward",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "grad_check",
    "is_recording",
    "layer_norm",
    "linear",
    "multi_head_attention",
    "prelu",
    "softmax",
    "stack",
    "symmetric_mean",
    "tensor",
]
