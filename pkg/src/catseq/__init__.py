"""Anomaly detection for multivariate categorical time series.

The series is read as text: sensors say letters, fixed-length letter runs
are words, and the words of all sensors at one time form a sentence. Three
detectors score sentences against behavior learned from nominal data: a
TF-IDF/SVD projector (squared projection residual), a dual-attention
transformer next-sentence forecaster and an entity-embedding + LSTM
forecaster (both scored by summed edit distance). Scores above a calibrated
percentile threshold are clustered into events, and each event carries a
per-sensor suspect ranking for root-cause investigation.
"""

from .corpus import (
    Sentence,
    SentenceTokenizer,
    TokenizedCorpus,
    Vocabulary,
    Word,
    ordinal_rank_column,
)
from .detection import (
    AnomalyEvent,
    ScoreSeries,
    SuspectRanking,
    Threshold,
    calibrate_threshold,
    cluster_events,
    ensemble_flag,
    flag_times,
    suspect_ranking,
)
from .editdist import forecast_anomaly_score, levenshtein, levenshtein_letters
from .evaluation import (
    GroundTruthAnomaly,
    Metrics,
    compute_metrics,
    f_beta,
    match_events,
    rootcause_hit_rate,
)
from .lstm import LstmForecaster, MaskedWordEmbedder, embed_sentence
from .svd import (
    SvdAnomalyDetector,
    SvdProjector,
    build_term_document_matrix,
    choose_k,
    compute_idf,
    fit_svd,
    svd_anomaly_score,
    vectorize_sentence,
)
from .synthetic import AnomalyInjection, SyntheticSpec, generate_synthetic
from .transformer import TransformerForecaster, assemble_sample, dual_attention_mask

__version__ = "0.1.0"

__all__ = [
    "Word",
    "Sentence",
    "Vocabulary",
    "TokenizedCorpus",
    "SentenceTokenizer",
    "ordinal_rank_column",
    "levenshtein",
    "levenshtein_letters",
    "forecast_anomaly_score",
    "compute_idf",
    "build_term_document_matrix",
    "fit_svd",
    "choose_k",
    "vectorize_sentence",
    "svd_anomaly_score",
    "SvdProjector",
    "SvdAnomalyDetector",
    "TransformerForecaster",
    "assemble_sample",
    "dual_attention_mask",
    "MaskedWordEmbedder",
    "LstmForecaster",
    "embed_sentence",
    "ScoreSeries",
    "Threshold",
    "AnomalyEvent",
    "SuspectRanking",
    "calibrate_threshold",
    "flag_times",
    "cluster_events",
    "suspect_ranking",
    "ensemble_flag",
    "GroundTruthAnomaly",
    "Metrics",
    "match_events",
    "f_beta",
    "compute_metrics",
    "rootcause_hit_rate",
    "SyntheticSpec",
    "AnomalyInjection",
    "generate_synthetic",
]
