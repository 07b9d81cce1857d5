"""Encoder-only next-sentence forecaster with dual self/causal attention.

The input window is the flattened token sequence of the ``lookback``
preceding sentences (sensor order fixed within each sentence) followed by
one mask token per sensor for the sentence being forecast. Context positions
attend only to context; each target position attends to all context plus its
own mask embedding, so no information flows between masked words. The output
head produces logits over the whole vocabulary, but the loss and the argmax
decode are both restricted to each sensor's contiguous vocabulary block.
"""

import json
import os

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Sentence, TokenizedCorpus
from .detection import ScoreSeries
from .editdist import batch_edit_distances
from .nn import (
    Adam,
    Tensor,
    init_dense,
    init_embedding,
    layer_norm,
    scaled_dot_attention,
    softmax_cross_entropy,
)
from .tensorstore import load_tensors, save_tensors


def assemble_sample(corpus: TokenizedCorpus, t: int, lookback: int):
    """Input tokens and target ids for forecasting the sentence at position t.

    The input is the integer encoding of sentences t-lookback..t-1 followed
    by one mask token (0) per sensor; targets are the true word ids of
    sentence t.
    """
    if t < lookback:
        raise ValueError(f"window underflow: t={t} needs {lookback} preceding sentences")
    if t >= len(corpus):
        raise ValueError(f"position {t} outside corpus of {len(corpus)} sentences")
    S = corpus.token_ids.shape[1]
    context = corpus.token_ids[t - lookback : t].ravel()
    tokens = np.concatenate([context, np.zeros(S, dtype=np.int64)])
    return tokens, corpus.token_ids[t].copy()


def assemble_windows(corpus: TokenizedCorpus, lookback: int):
    """All (input, target) pairs of a corpus as two stacked arrays."""
    n = len(corpus)
    if n <= lookback:
        raise ValueError("window underflow: corpus shorter than lookback + 1")
    S = corpus.token_ids.shape[1]
    ids = corpus.token_ids
    starts = np.arange(n - lookback)
    ctx = np.stack([ids[s : s + lookback].ravel() for s in starts])
    tokens = np.concatenate([ctx, np.zeros((len(starts), S), dtype=np.int64)], axis=1)
    return tokens, ids[lookback:].copy()


def dual_attention_mask(lookback: int, n_sensors: int) -> np.ndarray:
    """Boolean visibility matrix over the flattened token positions.

    Context queries see only context keys; the target position of each
    sensor sees all context plus itself, and never another target.
    """
    n_ctx = lookback * n_sensors
    L = n_ctx + n_sensors
    mask = np.zeros((L, L), dtype=bool)
    mask[:n_ctx, :n_ctx] = True
    mask[n_ctx:, :n_ctx] = True
    mask[n_ctx + np.arange(n_sensors), n_ctx + np.arange(n_sensors)] = True
    return mask


class TransformerForecaster(BaseEstimator):
    """Next-sentence forecaster built on a dual-attention encoder stack.

    Defaults follow the full-scale configuration (d_model 256, 5 heads,
    2 blocks); tests and desk-scale runs shrink them. When d_model is not
    divisible by the head count, per-head projections use ceil(d_model /
    heads) columns and the output projection maps back to d_model, so any
    combination is valid.

    Parameters
    ----------
    d_model : int, default=256
    heads : int, default=5
    blocks : int, default=2
    lookback : int, default=4
        Number of preceding sentences in the input window.
    ffn_dim : int or None
        Feed-forward width, defaulting to 4 * d_model.
    epochs, batch_size, learning_rate, seed : training controls.
    """

    def __init__(
        self,
        d_model: int = 256,
        heads: int = 5,
        blocks: int = 2,
        lookback: int = 4,
        ffn_dim=None,
        epochs: int = 20,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        seed: int = 0,
    ):
        self.d_model = d_model
        self.heads = heads
        self.blocks = blocks
        self.lookback = lookback
        self.ffn_dim = ffn_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    # -- model construction ----------------------------------------------------

    def _build(self, vocab_size: int, n_sensors: int):
        if self.d_model < 1 or self.heads < 1 or self.blocks < 1 or self.lookback < 1:
            raise ValueError("d_model, heads, blocks and lookback must be positive")
        rng = np.random.default_rng(self.seed)
        D = self.d_model
        dh = D // self.heads if D % self.heads == 0 else -(-D // self.heads)
        F = self.ffn_dim if self.ffn_dim is not None else 4 * D
        L = (self.lookback + 1) * n_sensors
        p = {}
        p["tok_emb"] = init_embedding(rng, vocab_size + 1, D)
        p["pos_emb"] = init_embedding(rng, L, D)
        for i in range(self.blocks):
            pre = f"blk{i}."
            p[pre + "Wq"], p[pre + "bq"] = init_dense(rng, D, self.heads * dh)
            p[pre + "Wk"], p[pre + "bk"] = init_dense(rng, D, self.heads * dh)
            p[pre + "Wv"], p[pre + "bv"] = init_dense(rng, D, self.heads * dh)
            p[pre + "Wo"], p[pre + "bo"] = init_dense(rng, self.heads * dh, D)
            p[pre + "W1"], p[pre + "b1"] = init_dense(rng, D, F)
            p[pre + "W2"], p[pre + "b2"] = init_dense(rng, F, D)
            p[pre + "g1"] = Tensor(np.ones(D), requires_grad=True)
            p[pre + "n1"] = Tensor(np.zeros(D), requires_grad=True)
            p[pre + "g2"] = Tensor(np.ones(D), requires_grad=True)
            p[pre + "n2"] = Tensor(np.zeros(D), requires_grad=True)
        p["gf"] = Tensor(np.ones(D), requires_grad=True)
        p["nf"] = Tensor(np.zeros(D), requires_grad=True)
        p["Wout"], p["bout"] = init_dense(rng, D, vocab_size)
        self.params_ = p
        self._head_dim = dh
        self._seq_len = L
        self._mask = dual_attention_mask(self.lookback, n_sensors)
        return rng

    def _forward(self, tokens: np.ndarray) -> Tensor:
        """Logits at the target positions, shape (batch, sensors, vocab).

        Target positions always carry the mask embedding: whatever token ids
        the caller placed there are replaced by 0, so a target's
        representation is a function of the context and its position only.
        """
        p = self.params_
        B, L = tokens.shape
        if L != self._seq_len:
            raise ValueError(f"expected token rows of length {self._seq_len}, got {L}")
        S = self._n_sensors
        n_ctx = L - S
        tokens = tokens.copy()
        tokens[:, n_ctx:] = 0
        x = p["tok_emb"].gather_rows(tokens) + p["pos_emb"]
        H, dh = self.heads, self._head_dim
        for i in range(self.blocks):
            pre = f"blk{i}."
            h = layer_norm(x, p[pre + "g1"], p[pre + "n1"])
            q = (h @ p[pre + "Wq"] + p[pre + "bq"]).reshape(B, L, H, dh).transpose((0, 2, 1, 3))
            k = (h @ p[pre + "Wk"] + p[pre + "bk"]).reshape(B, L, H, dh).transpose((0, 2, 1, 3))
            v = (h @ p[pre + "Wv"] + p[pre + "bv"]).reshape(B, L, H, dh).transpose((0, 2, 1, 3))
            a = scaled_dot_attention(q, k, v, mask=self._mask)
            a = a.transpose((0, 2, 1, 3)).reshape(B, L, H * dh)
            x = x + (a @ p[pre + "Wo"] + p[pre + "bo"])
            h2 = layer_norm(x, p[pre + "g2"], p[pre + "n2"])
            f = (h2 @ p[pre + "W1"] + p[pre + "b1"]).relu() @ p[pre + "W2"] + p[pre + "b2"]
            x = x + f
        x = layer_norm(x, p["gf"], p["nf"])
        targets = x[:, n_ctx:, :]
        return targets @ p["Wout"] + p["bout"]

    def _loss(self, logits: Tensor, target_ids: np.ndarray) -> Tensor:
        """Mean over sensors of the cross entropy on each sensor's block."""
        losses = []
        for j, (lo, hi) in enumerate(self._slices):
            local = logits[:, j, lo - 1 : hi - 1]
            losses.append(softmax_cross_entropy(local, target_ids[:, j] - lo))
        total = losses[0]
        for loss in losses[1:]:
            total = total + loss
        return total * (1.0 / len(losses))

    # -- estimator API -----------------------------------------------------------

    def fit(self, corpus: TokenizedCorpus, y=None):
        vocab = corpus.vocabulary
        self._n_sensors = len(corpus.sensor_order)
        self._slices = [vocab.sensor_slice(s) for s in corpus.sensor_order]
        rng = self._build(vocab.size, self._n_sensors)
        tokens, targets = assemble_windows(corpus, self.lookback)
        opt = Adam(self.params_, lr=self.learning_rate)
        n = len(tokens)
        history = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, self.batch_size):
                batch = order[lo : lo + self.batch_size]
                opt.zero_grad()
                loss = self._loss(self._forward(tokens[batch]), targets[batch])
                if not np.isfinite(loss.data):
                    raise RuntimeError("training diverged: non-finite loss")
                loss.backward()
                opt.step()
                epoch_loss += float(loss.data) * len(batch)
            history.append(epoch_loss / n)
        self.loss_history_ = history
        self.sensor_order_ = corpus.sensor_order
        self.word_length_ = corpus.word_length
        self.vocabulary_hash_ = vocab.content_hash()
        return self

    def target_logits(self, tokens: np.ndarray) -> np.ndarray:
        """Forward pass only; accepts raw (batch, window) token rows."""
        check_is_fitted(self, "params_")
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        return self._forward(tokens).data

    def forecast_ids(self, windows: np.ndarray) -> np.ndarray:
        """Per-sensor argmax inside each sensor's vocabulary block.

        ``windows`` is (batch, lookback, sensors) or flattened token rows.
        Ties resolve to the lowest global index.
        """
        check_is_fitted(self, "params_")
        windows = np.asarray(windows, dtype=np.int64)
        S = self._n_sensors
        if windows.ndim == 3:
            B = windows.shape[0]
            if windows.shape[1] != self.lookback or windows.shape[2] != S:
                raise ValueError("schema mismatch: window shape does not match model")
            tokens = np.concatenate(
                [windows.reshape(B, -1), np.zeros((B, S), dtype=np.int64)], axis=1
            )
        else:
            tokens = windows if windows.ndim == 2 else windows[None, :]
        logits = self.target_logits(tokens)
        out = np.zeros((len(tokens), S), dtype=np.int64)
        for j, (lo, hi) in enumerate(self._slices):
            out[:, j] = np.argmax(logits[:, j, lo - 1 : hi - 1], axis=1) + lo
        return out

    def forecast_sentence(self, corpus: TokenizedCorpus, t: int) -> Sentence:
        """Forecast the sentence at corpus position t from its window."""
        self._check_corpus(corpus)
        tokens, _ = assemble_sample(corpus, t, self.lookback)
        ids = self.forecast_ids(tokens[None, :])[0]
        words = {s: corpus.vocabulary.word_at(int(i)) for s, i in zip(self.sensor_order_, ids)}
        return Sentence(time=int(corpus.times[t]), words=words)

    def _check_corpus(self, corpus: TokenizedCorpus):
        check_is_fitted(self, "params_")
        if corpus.vocabulary.content_hash() != self.vocabulary_hash_:
            raise ValueError("schema mismatch: corpus vocabulary differs from training")

    def score_sentences(self, corpus: TokenizedCorpus, batch_size: int = 256) -> ScoreSeries:
        """Summed per-sensor edit distance between forecast and actual sentences."""
        self._check_corpus(corpus)
        tokens, actual = assemble_windows(corpus, self.lookback)
        forecasts = np.zeros_like(actual)
        for lo in range(0, len(tokens), batch_size):
            forecasts[lo : lo + batch_size] = self.forecast_ids(tokens[lo : lo + batch_size])
        observed = corpus.observed[self.lookback :]
        contributions = batch_edit_distances(
            actual, forecasts, observed, corpus.vocabulary, self.word_length_
        )
        return ScoreSeries(
            times=corpus.times[self.lookback :],
            scores=contributions.sum(axis=1),
            contributions=contributions,
            sensor_order=self.sensor_order_,
        )

    # -- persistence -------------------------------------------------------------

    def save(self, directory):
        check_is_fitted(self, "params_")
        os.makedirs(directory, exist_ok=True)
        tensors = {name: t.data for name, t in self.params_.items()}
        manifest = save_tensors(tensors, os.path.join(directory, "model.bin"))
        manifest["model"] = {
            "type": "transformer",
            "d_model": self.d_model,
            "heads": self.heads,
            "blocks": self.blocks,
            "lookback": self.lookback,
            "ffn_dim": self.ffn_dim,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "n_sensors": self._n_sensors,
            "slices": [list(sl) for sl in self._slices],
            "sensor_order": list(self.sensor_order_),
            "word_length": self.word_length_,
            "vocabulary_hash": self.vocabulary_hash_,
        }
        with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "TransformerForecaster":
        with open(os.path.join(directory, "model.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
        meta = manifest["model"]
        model = cls(
            d_model=meta["d_model"],
            heads=meta["heads"],
            blocks=meta["blocks"],
            lookback=meta["lookback"],
            ffn_dim=meta["ffn_dim"],
            epochs=meta["epochs"],
            batch_size=meta["batch_size"],
            learning_rate=meta["learning_rate"],
            seed=meta["seed"],
        )
        tensors = load_tensors(os.path.join(directory, "model.bin"), manifest)
        model._n_sensors = meta["n_sensors"]
        model._slices = [tuple(sl) for sl in meta["slices"]]
        model._build(tensors["Wout"].shape[1], meta["n_sensors"])
        for name, arr in tensors.items():
            model.params_[name].data = arr
        model.sensor_order_ = tuple(meta["sensor_order"])
        model.word_length_ = meta["word_length"]
        model.vocabulary_hash_ = meta["vocabulary_hash"]
        return model
