"""Layers and losses composed from the autograd primitives."""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor

__all__ = [
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
]

MASK_VALUE = -1e30  # additive mask; exp() underflows to exactly zero weight


def dense(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map y = xW + b."""
    y = x @ W
    return y if b is None else y + b


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Rows of ``table`` at ``indices`` (row 0 is the mask row)."""
    return table.gather_rows(indices)


def softmax_cross_entropy(logits: Tensor, target, reduction: str = "mean") -> Tensor:
    """Cross entropy of stabilized softmax against one-hot or soft targets.

    ``target`` is either an integer class index array (leading shape of
    ``logits``) or a distribution array matching ``logits``.
    """
    shifted = logits - Tensor(logits.data.max(axis=-1, keepdims=True))
    log_z = shifted.exp().sum(axis=-1, keepdims=True).log()
    log_probs = shifted - log_z
    target = np.asarray(target)
    if np.issubdtype(target.dtype, np.integer):
        onehot = np.zeros(logits.data.shape)
        np.put_along_axis(onehot, target[..., None], 1.0, axis=-1)
        target = onehot
    losses = -(Tensor(target) * log_probs).sum(axis=-1)
    if reduction == "none":
        return losses
    if reduction == "sum":
        return losses.sum()
    if reduction == "mean":
        return losses.mean() if losses.data.ndim else losses
    raise ValueError(f"unknown reduction {reduction!r}")


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
    """softmax(QK^T / sqrt(d) + mask) V with optional boolean visibility mask.

    ``mask`` marks visible (query, key) pairs; hidden pairs receive exactly
    zero attention weight.
    """
    d = q.data.shape[-1]
    scores = (q @ k.transpose(_swap_last(k.data.ndim))) * (1.0 / np.sqrt(d))
    if mask is not None:
        mask = np.asarray(mask)
        if mask.dtype == bool:
            additive = np.where(mask, 0.0, MASK_VALUE)
        else:
            additive = mask
        scores = scores + Tensor(additive)
    weights = scores.softmax(axis=-1)
    return weights @ v


def _swap_last(ndim: int):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then rescale."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * ((var + eps) ** -0.5) * gain + bias


@dataclass
class LstmParams:
    """Gate weights of one LSTM layer; columns ordered i, f, g, o."""

    Wx: Tensor
    Wh: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.Wh.data.shape[0]


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams):
    """One standard LSTM cell update; returns (h_t, c_t)."""
    H = p.hidden
    z = x @ p.Wx + h_prev @ p.Wh + p.b
    i = z[..., 0 * H : 1 * H].sigmoid()
    f = z[..., 1 * H : 2 * H].sigmoid()
    g = z[..., 2 * H : 3 * H].tanh()
    o = z[..., 3 * H : 4 * H].sigmoid()
    c_t = f * c_prev + i * g
    h_t = o * c_t.tanh()
    return h_t, c_t


def lstm_sequence(xs, p: LstmParams, h0: Tensor | None = None, c0: Tensor | None = None):
    """Unroll an LSTM over a list of per-step inputs; returns all hidden states."""
    batch = xs[0].data.shape[0]
    h = h0 if h0 is not None else Tensor(np.zeros((batch, p.hidden)))
    c = c0 if c0 is not None else Tensor(np.zeros((batch, p.hidden)))
    hs = []
    for x in xs:
        h, c = lstm_step(x, h, c, p)
        hs.append(h)
    return hs, (h, c)


# -- initialization ------------------------------------------------------------


def init_dense(rng: np.random.Generator, fan_in: int, fan_out: int):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias."""
    bound = 1.0 / np.sqrt(fan_in)
    W = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
    b = Tensor(np.zeros(fan_out), requires_grad=True)
    return W, b


def init_embedding(rng: np.random.Generator, rows: int, dim: int) -> Tensor:
    return Tensor(rng.normal(0.0, 0.02, size=(rows, dim)), requires_grad=True)


def init_lstm(rng: np.random.Generator, input_dim: int, hidden: int) -> LstmParams:
    bx = 1.0 / np.sqrt(input_dim)
    bh = 1.0 / np.sqrt(hidden)
    return LstmParams(
        Wx=Tensor(rng.uniform(-bx, bx, size=(input_dim, 4 * hidden)), requires_grad=True),
        Wh=Tensor(rng.uniform(-bh, bh, size=(hidden, 4 * hidden)), requires_grad=True),
        b=Tensor(np.zeros(4 * hidden), requires_grad=True),
    )
