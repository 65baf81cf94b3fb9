"""Differentiable numerical kernels on a minimal reverse-mode tape."""

from .gradcheck import grad_check, tape_gradients
from .ops import (
    depthwise_dilated_conv1d,
    ffn,
    film,
    glu,
    group_norm,
    layer_norm,
    linear,
    multi_head_attention,
    multi_head_cross_attention,
    pooling_matrix,
    softmax_rows,
    windowed_mean_pool,
)
from .optim import AdamW
from .tape import Parameter, ParameterStore, Tape, Var

__all__ = [
    "AdamW", "Parameter", "ParameterStore", "Tape", "Var", "depthwise_dilated_conv1d", "ffn",
    "film", "glu", "grad_check", "group_norm", "layer_norm", "linear", "multi_head_attention",
    "multi_head_cross_attention", "pooling_matrix", "softmax_rows", "tape_gradients",
    "windowed_mean_pool",
]
