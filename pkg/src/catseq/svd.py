"""TF-IDF term-document matrix, rank-k SVD projector and residual scoring.

A training corpus becomes an m x n matrix W with one column per sentence and
one row per vocabulary word, W(i,j) = TF(i,j) * IDF(i). The first k left
singular vectors U define the orthogonal projection P(x) = U U^T x onto the
best rank-k approximation's column space; a sentence's anomaly score is its
squared projection residual, which decomposes exactly over words (and hence
over sensors, since vocabularies are disjoint).
"""

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import TokenizedCorpus
from .detection import ScoreSeries
from .tensorstore import load_tensors, save_tensors

# below this size a dense LAPACK SVD is cheap and maximally accurate
_DENSE_SVD_LIMIT = 1200


@dataclass
class IdfTable:
    """Smoothed inverse document frequencies, idf(i) = ln((n+2)/(f_i+1)).

    Words never seen in training (the reserved tokens) have f_i = 0 and take
    the maximal weight ln(n+2).
    """

    n_sentences: int
    doc_freq: np.ndarray  # position i-1 -> f_i
    idf: np.ndarray  # position i-1 -> idf(i)

    def max_true_word_idf(self) -> float:
        seen = self.doc_freq > 0
        if not seen.any():
            raise ValueError("corpus has no observed words")
        return float(self.idf[seen].max())


def compute_idf(corpus: TokenizedCorpus) -> IdfTable:
    """Count per-word document frequencies and apply the smoothed formula."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    m = corpus.vocabulary.size
    n = len(corpus)
    freq = np.zeros(m, dtype=np.int64)
    ids, counts = np.unique(corpus.token_ids, return_counts=True)
    freq[ids - 1] = counts  # one word per sensor per sentence, so TF is 0/1
    idf = np.log((n + 2.0) / (freq + 1.0))
    return IdfTable(n_sentences=n, doc_freq=freq, idf=idf)


def build_term_document_matrix(corpus: TokenizedCorpus, idf: IdfTable) -> sp.csc_matrix:
    """Sparse m x n matrix of TF*IDF values, words x training sentences."""
    m = corpus.vocabulary.size
    if len(idf.idf) != m:
        raise ValueError("inconsistent inputs: IDF table size differs from vocabulary")
    n = len(corpus)
    S = corpus.token_ids.shape[1]
    rows = (corpus.token_ids - 1).ravel()
    cols = np.repeat(np.arange(n), S)
    data = idf.idf[rows]
    return sp.csc_matrix((data, (rows, cols)), shape=(m, n))


@dataclass
class SvdProjector:
    """First k left singular vectors of W plus the matching singular values."""

    U: np.ndarray
    sigma: np.ndarray
    k: int
    unknown_override: float = 0.0

    def project(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.U.shape[0]:
            raise ValueError(
                f"vector length mismatch: {x.shape[0]} vs {self.U.shape[0]}"
            )
        return self.U @ (self.U.T @ x)


def _singular_spectrum(W):
    """All singular values of W plus left singular vectors, descending.

    Small problems go through LAPACK directly. Larger ones use the Gram
    matrix of the smaller side, which is accurate for the leading part of
    the spectrum (all the projector ever keeps).
    """
    m, n = W.shape
    if min(m, n) <= _DENSE_SVD_LIMIT:
        dense = W.toarray() if sp.issparse(W) else np.asarray(W, dtype=float)
        U, sigma, _ = np.linalg.svd(dense, full_matrices=False)
        return U, sigma
    if m <= n:
        G = (W @ W.T).toarray() if sp.issparse(W) else W @ W.T
        lam, vecs = np.linalg.eigh(G)
        order = np.argsort(lam)[::-1]
        lam = np.clip(lam[order], 0.0, None)
        return vecs[:, order], np.sqrt(lam)
    G = (W.T @ W).toarray() if sp.issparse(W) else W.T @ W
    lam, vecs = np.linalg.eigh(G)
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    sigma = np.sqrt(lam)
    cutoff = sigma[0] * 1e-7 if len(sigma) else 0.0
    keep = sigma > cutoff
    V = vecs[:, order][:, keep]
    U = (W @ V) / sigma[keep]
    U, _ = np.linalg.qr(np.asarray(U))  # re-orthonormalize small-sigma drift
    return U, sigma


def matrix_rank_from_sigma(sigma: np.ndarray) -> int:
    if len(sigma) == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > sigma[0] * 1e-10))


def choose_k(sigma, energy: float = 0.90) -> int:
    """Smallest k whose leading singular values carry the requested energy."""
    sigma = np.asarray(sigma, dtype=float)
    if len(sigma) == 0:
        raise ValueError("empty singular value list")
    if not 0.0 < energy <= 1.0:
        raise ValueError("energy must be in (0, 1]")
    nonzero = matrix_rank_from_sigma(sigma)
    if nonzero == 0:
        raise ValueError("all singular values are zero")
    power = np.cumsum(sigma[:nonzero] ** 2)
    ratio = power / power[-1]
    return int(np.searchsorted(ratio, energy - 1e-12) + 1)


def fit_svd(W, k: int, unknown_override: float = 0.0) -> SvdProjector:
    """Rank-k truncation of W's singular value decomposition."""
    U, sigma = _singular_spectrum(W)
    rank = matrix_rank_from_sigma(sigma)
    if not 1 <= k <= rank:
        raise ValueError(f"k exceeds rank: k={k}, rank(W)={rank}")
    if not np.all(np.isfinite(sigma)):
        raise ValueError("decomposition failed: non-finite singular values")
    return SvdProjector(
        U=np.ascontiguousarray(U[:, :k]),
        sigma=sigma[:k].copy(),
        k=k,
        unknown_override=unknown_override,
    )


def vectorize_sentence(token_ids_row, idf: IdfTable, unknown_override: float, unknown_ids):
    """IDF-weighted m-vector of one sentence, as (support, values).

    Known words get their IDF weight (TF=1); reserved tokens get the
    override so that novelty outweighs every true word.
    """
    support = np.asarray(token_ids_row, dtype=np.int64) - 1
    values = idf.idf[support].copy()
    unknown = np.isin(support + 1, unknown_ids)
    values[unknown] = unknown_override
    return support, values


def svd_anomaly_score(projector: SvdProjector, x: np.ndarray):
    """Squared projection residual and its per-coordinate decomposition.

    Returns ``(score, contributions)`` with ``contributions[i] =
    (P(x)_i - x_i)^2``; the contributions sum to the score exactly.
    """
    r = projector.project(x) - x
    contributions = r * r
    return float(contributions.sum()), contributions


class SvdAnomalyDetector(BaseEstimator):
    """Latent-semantic anomaly detector over tokenized sentences.

    Parameters
    ----------
    k : int or None, default=None
        Projection rank. None selects the smallest rank capturing ``energy``
        of the squared singular value mass.
    energy : float, default=0.90
        Energy fraction used when ``k`` is None.
    unknown_override : float or None, default=None
        TF-IDF value substituted for reserved tokens at inference. None means
        twice the maximal true-word TF-IDF entry of the training matrix.
    """

    def __init__(self, k=None, energy: float = 0.90, unknown_override=None):
        self.k = k
        self.energy = energy
        self.unknown_override = unknown_override

    def fit(self, corpus: TokenizedCorpus, y=None):
        idf = compute_idf(corpus)
        W = build_term_document_matrix(corpus, idf)
        U, sigma = _singular_spectrum(W)
        rank = matrix_rank_from_sigma(sigma)
        if rank == 0:
            raise ValueError("term-document matrix is zero")
        k = self.k if self.k is not None else choose_k(sigma, self.energy)
        if not 1 <= k <= rank:
            raise ValueError(f"k exceeds rank: k={k}, rank(W)={rank}")
        override = (
            self.unknown_override
            if self.unknown_override is not None
            else 2.0 * idf.max_true_word_idf()
        )
        self.idf_ = idf
        self.projector_ = SvdProjector(
            U=np.ascontiguousarray(U[:, :k]),
            sigma=sigma[:k].copy(),
            k=int(k),
            unknown_override=float(override),
        )
        self.sigma_all_ = sigma
        self.sensor_order_ = corpus.sensor_order
        self.word_length_ = corpus.word_length
        self.vocabulary_hash_ = corpus.vocabulary.content_hash()
        self._slice_starts = np.array(
            [corpus.vocabulary.sensor_slice(s)[0] - 1 for s in self.sensor_order_],
            dtype=np.int64,
        )
        self._unknown_ids = corpus.vocabulary.unknown_indices()
        return self

    def _check_corpus(self, corpus: TokenizedCorpus):
        if corpus.vocabulary.content_hash() != self.vocabulary_hash_:
            raise ValueError("schema mismatch: corpus vocabulary differs from training")

    def score_sentences(self, corpus: TokenizedCorpus, batch_size: int = 512) -> ScoreSeries:
        """Squared projection residual per sentence with per-sensor shares.

        A sensor's contribution is the summed residual over its vocabulary
        block (the projection spreads mass onto words not in the sentence,
        and those coordinates belong to their sensor's share).
        """
        check_is_fitted(self, "projector_")
        self._check_corpus(corpus)
        proj = self.projector_
        m = proj.U.shape[0]
        n = len(corpus)
        S = len(self.sensor_order_)
        scores = np.zeros(n)
        contributions = np.zeros((n, S))
        support_all = corpus.token_ids - 1
        values_all = self.idf_.idf[support_all].copy()
        values_all[np.isin(corpus.token_ids, self._unknown_ids)] = proj.unknown_override
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            nb = hi - lo
            rows = support_all[lo:hi].ravel()
            cols = np.repeat(np.arange(nb), S)
            X = sp.csc_matrix((values_all[lo:hi].ravel(), (rows, cols)), shape=(m, nb))
            R = proj.U @ (proj.U.T @ X) - X.toarray()
            R *= R
            scores[lo:hi] = R.sum(axis=0)
            contributions[lo:hi] = np.add.reduceat(R, self._slice_starts, axis=0).T
        return ScoreSeries(
            times=corpus.times,
            scores=scores,
            contributions=contributions,
            sensor_order=self.sensor_order_,
        )

    # -- persistence ---------------------------------------------------------

    def save(self, directory):
        check_is_fitted(self, "projector_")
        os.makedirs(directory, exist_ok=True)
        tensors = {
            "U": self.projector_.U,
            "sigma": self.projector_.sigma,
            "idf": self.idf_.idf,
            "doc_freq": self.idf_.doc_freq,
            "slice_starts": self._slice_starts,
            "unknown_ids": self._unknown_ids,
        }
        manifest = save_tensors(tensors, os.path.join(directory, "model.bin"))
        manifest["model"] = {
            "type": "svd",
            "m": int(self.projector_.U.shape[0]),
            "k": int(self.projector_.k),
            "energy": self.energy,
            "unknown_override": self.projector_.unknown_override,
            "n_sentences": int(self.idf_.n_sentences),
            "word_length": int(self.word_length_),
            "sensor_order": list(self.sensor_order_),
            "vocabulary_hash": self.vocabulary_hash_,
        }
        with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "SvdAnomalyDetector":
        with open(os.path.join(directory, "model.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
        meta = manifest["model"]
        tensors = load_tensors(os.path.join(directory, "model.bin"), manifest)
        det = cls(k=meta["k"], energy=meta["energy"], unknown_override=meta["unknown_override"])
        det.idf_ = IdfTable(
            n_sentences=meta["n_sentences"],
            doc_freq=tensors["doc_freq"],
            idf=tensors["idf"],
        )
        det.projector_ = SvdProjector(
            U=tensors["U"],
            sigma=tensors["sigma"],
            k=meta["k"],
            unknown_override=meta["unknown_override"],
        )
        det.sigma_all_ = tensors["sigma"]
        det.sensor_order_ = tuple(meta["sensor_order"])
        det.word_length_ = meta["word_length"]
        det.vocabulary_hash_ = meta["vocabulary_hash"]
        det._slice_starts = tensors["slice_starts"]
        det._unknown_ids = tensors["unknown_ids"]
        return det
