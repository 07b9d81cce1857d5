"""Minimal deterministic differentiable-compute engine for the forecasters."""

from .autograd import Tensor, concat
from .gradcheck import finite_difference_check
from .layers import (
    LstmParams,
    dense,
    embedding_lookup,
    init_dense,
    init_embedding,
    init_lstm,
    layer_norm,
    lstm_sequence,
    lstm_step,
    scaled_dot_attention,
    softmax_cross_entropy,
)
from .optim import Adam, adam_step

__all__ = [
    "Tensor",
    "concat",
    "dense",
    "embedding_lookup",
    "softmax_cross_entropy",
    "scaled_dot_attention",
    "layer_norm",
    "LstmParams",
    "lstm_step",
    "lstm_sequence",
    "init_dense",
    "init_embedding",
    "init_lstm",
    "Adam",
    "adam_step",
    "finite_difference_check",
]
