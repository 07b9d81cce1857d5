"""Model-bundle lifecycle shared by the CLI: train, persist, load, detect.

A bundle is a directory with a manifest and one subdirectory per sensor
group ("all" when no subsystem map is given): the fitted tokenizer, the
fitted model and the calibrated threshold. Detection re-tokenizes the test
series per group, applies each group's threshold, combines flags with the
ensemble policy and clusters them into events with per-event suspect
rankings.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .corpus import SentenceTokenizer, ordinal_rank_column
from .detection import (
    ScoreSeries,
    SuspectRanking,
    Threshold,
    calibrate_threshold,
    cluster_events,
    default_cluster_gap,
    ensemble_flag,
    flag_times,
    suspect_ranking,
)
from .evaluation import (
    compute_metrics,
    match_events,
    metrics_table,
    rootcause_hit_rate,
    round_half_up,
)
from .lstm import LstmForecaster, MaskedWordEmbedder
from .svd import SvdAnomalyDetector
from .transformer import TransformerForecaster

MODEL_KINDS = ("svd", "transformer", "lstm")


@dataclass
class RunConfig:
    """Everything a training or detection run needs, JSON-serializable."""

    model: str = "svd"
    word_length: int = 5
    alpha: float = 1.25
    percentile: float = 99.5
    seed: int = 0
    # svd
    k: int | None = None
    energy: float = 0.90
    unknown_override: float | None = None
    # transformer
    d_model: int = 256
    heads: int = 5
    blocks: int = 2
    ffn_dim: int | None = None
    # embeddings + lstm
    embed_dim: int | None = None
    embed_hidden_dims: tuple | None = None
    embed_epochs: int = 10
    lstm_dims: tuple | None = None
    # shared training controls
    lookback: int | None = None  # transformer defaults to 4, lstm to 10
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    # detection / evaluation
    cluster_gap: int | None = None
    tolerance_frac: float = 0.01
    ensemble_policy: str = "any"
    subsystem_map: dict | None = None
    ordinal_columns: list = field(default_factory=list)
    calibration_steps: int = 1000

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODEL_KINDS}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.word_length < 1:
            raise ValueError("word_length must be >= 1")

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("embed_hidden_dims", "lstm_dims"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_json_dict(self) -> dict:
        out = asdict(self)
        for key in ("embed_hidden_dims", "lstm_dims"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


def _groups(config: RunConfig, columns) -> dict:
    """Sensor columns per group; groups must partition the sensor set."""
    columns = list(columns)
    if not config.subsystem_map:
        return {"all": columns}
    mapped = {}
    for col in columns:
        if col not in config.subsystem_map:
            raise ValueError(f"sensor {col!r} missing from subsystem_map")
        mapped.setdefault(config.subsystem_map[col], []).append(col)
    return {g: mapped[g] for g in sorted(mapped)}


def _build_model(config: RunConfig):
    if config.model == "svd":
        return SvdAnomalyDetector(
            k=config.k, energy=config.energy, unknown_override=config.unknown_override
        )
    if config.model == "transformer":
        return TransformerForecaster(
            d_model=config.d_model,
            heads=config.heads,
            blocks=config.blocks,
            lookback=config.lookback if config.lookback is not None else 4,
            ffn_dim=config.ffn_dim,
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            seed=config.seed,
        )
    return None  # lstm is assembled in two stages during training


def _prepare_frame(config: RunConfig, frame: pd.DataFrame) -> pd.DataFrame:
    for col in config.ordinal_columns:
        frame = ordinal_rank_column(frame, col, config.calibration_steps)
    return frame


def train_bundle(config: RunConfig, train_frame: pd.DataFrame, out_dir) -> dict:
    """Fit one model per sensor group, calibrate thresholds, persist everything."""
    os.makedirs(out_dir, exist_ok=True)
    frame = _prepare_frame(config, train_frame)
    manifest = {"config": config.to_json_dict(), "groups": {}}
    for group, cols in _groups(config, frame.columns).items():
        gdir = os.path.join(out_dir, group)
        os.makedirs(gdir, exist_ok=True)
        tokenizer = SentenceTokenizer(word_length=config.word_length).fit(frame[cols])
        corpus = tokenizer.transform(frame[cols])
        if config.model == "lstm":
            embedder = MaskedWordEmbedder(
                embed_dim=config.embed_dim,
                hidden_dims=config.embed_hidden_dims,
                epochs=config.embed_epochs,
                batch_size=config.batch_size,
                learning_rate=config.learning_rate,
                seed=config.seed,
            ).fit(corpus)
            model = LstmForecaster(
                embedding=embedder.embedding_,
                lookback=config.lookback if config.lookback is not None else 10,
                lstm_dims=config.lstm_dims,
                epochs=config.epochs,
                batch_size=config.batch_size,
                learning_rate=config.learning_rate,
                seed=config.seed,
            ).fit(corpus)
        else:
            model = _build_model(config).fit(corpus)
        reference = model.score_sentences(corpus)
        threshold = calibrate_threshold(reference, alpha=config.alpha, percentile=config.percentile)
        tokenizer.save(os.path.join(gdir, "tokenizer.json"))
        model.save(gdir)
        manifest["groups"][group] = {
            "sensors": cols,
            "model": config.model,
            "vocabulary_hash": tokenizer.vocabulary_.content_hash(),
            "threshold": {
                "value": threshold.value,
                "alpha": threshold.alpha,
                "reference_percentile": threshold.reference_percentile,
                "percentile_value": threshold.percentile_value,
            },
        }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_bundle(bundle_dir):
    """Return (config, {group: (sensors, tokenizer, model, threshold)})."""
    with open(os.path.join(bundle_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = RunConfig.from_json_dict(manifest["config"])
    groups = {}
    loaders = {"svd": SvdAnomalyDetector, "transformer": TransformerForecaster, "lstm": LstmForecaster}
    for group, meta in manifest["groups"].items():
        gdir = os.path.join(bundle_dir, group)
        tokenizer = SentenceTokenizer.load(os.path.join(gdir, "tokenizer.json"))
        model = loaders[meta["model"]].load(gdir)
        th = meta["threshold"]
        threshold = Threshold(
            value=th["value"],
            alpha=th["alpha"],
            reference_percentile=th["reference_percentile"],
            percentile_value=th["percentile_value"],
        )
        groups[group] = (meta["sensors"], tokenizer, model, threshold)
    return config, groups


def _combined_series(group_series: dict) -> ScoreSeries:
    """Stack disjoint-sensor score series on their shared time grid."""
    names = sorted(group_series)
    first = group_series[names[0]]
    times = first.times
    for name in names[1:]:
        if not np.array_equal(group_series[name].times, times):
            raise ValueError("subsystem score series are not aligned in time")
    sensors = []
    chunks = []
    for name in names:
        sensors.extend(group_series[name].sensor_order)
        chunks.append(group_series[name].contributions)
    contributions = np.concatenate(chunks, axis=1)
    scores = sum(group_series[name].scores for name in names)
    return ScoreSeries(times=times, scores=scores, contributions=contributions, sensor_order=tuple(sensors))


def detect_bundle(bundle_dir, test_frame: pd.DataFrame, out_dir) -> dict:
    """Score a test series against a bundle and write the anomaly report."""
    config, groups = load_bundle(bundle_dir)
    os.makedirs(out_dir, exist_ok=True)
    frame = _prepare_frame(config, test_frame)
    missing = [c for cols, *_ in groups.values() for c in cols if c not in frame.columns]
    if missing:
        raise ValueError(f"schema mismatch: test series lacks columns {missing}")
    series_length = len(frame)
    group_series = {}
    group_flags = {}
    thresholds = {}
    for group, (cols, tokenizer, model, threshold) in sorted(groups.items()):
        corpus = tokenizer.transform(frame[cols])
        series = model.score_sentences(corpus)
        group_series[group] = series
        group_flags[group] = flag_times(series, threshold)
        thresholds[group] = threshold
    combined = _combined_series(group_series)
    flags = ensemble_flag(list(group_flags.values()), policy=config.ensemble_policy)
    gap = config.cluster_gap if config.cluster_gap is not None else default_cluster_gap(series_length)
    events = cluster_events(flags, gap, score_series=combined)
    for event in events:
        event.suspects = suspect_ranking(combined, event.member_times)

    scores_path = os.path.join(out_dir, "scores.csv")
    rows = []
    for group in sorted(group_series):
        series = group_series[group]
        th = thresholds[group].value
        for t, s in zip(series.times, series.scores):
            rows.append((int(t), group, float(s), float(s / th) if th > 0 else float("inf")))
    pd.DataFrame(rows, columns=["time", "group", "score", "threshold_ratio"]).to_csv(
        scores_path, index=False
    )

    report = {
        "series_length": series_length,
        "ensemble_policy": config.ensemble_policy,
        "cluster_gap": gap,
        "thresholds": {
            g: {
                "value": thresholds[g].value,
                "alpha": thresholds[g].alpha,
                "reference_percentile": thresholds[g].reference_percentile,
            }
            for g in sorted(thresholds)
        },
        "events": [
            {
                "start": e.start,
                "end": e.end,
                "n_flagged": int(len(e.member_times)),
                "peak_score": e.peak_score,
                "suspects": [
                    {"sensor": s, "score": e.suspects.scores[s], "rank": r + 1}
                    for r, s in enumerate(e.suspects.ordering)
                ],
            }
            for e in events
        ],
    }
    with open(os.path.join(out_dir, "events.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return report


@dataclass
class _ReportEvent:
    start: int
    end: int


def evaluate_report(report: dict, truths, series_length=None, tolerance_frac=0.01, top_frac=0.10) -> dict:
    """Match report events to truths; compute F-scores and root-cause hits."""
    if series_length is None:
        series_length = report["series_length"]
    events = [_ReportEvent(e["start"], e["end"]) for e in report["events"]]
    result = match_events(events, truths, series_length, tolerance_frac)
    metrics = compute_metrics(result.tp, result.fp, result.fn)
    rankings = {
        (e["start"], e["end"]): SuspectRanking(
            scores={s["sensor"]: s["score"] for s in e["suspects"]},
            ordering=[s["sensor"] for s in sorted(e["suspects"], key=lambda x: x["rank"])],
        )
        for e in report["events"]
    }
    rootcause = []
    for event, truth in result.pairs:
        entry = {"truth_start": truth.start, "event_start": event.start, "hit_rate": None}
        if truth.culprit_sensors:
            ranking = rankings[(event.start, event.end)]
            entry["hit_rate"] = rootcause_hit_rate(ranking, truth, top_frac)
        rootcause.append(entry)
    return {
        "tp": result.tp,
        "fp": result.fp,
        "fn": result.fn,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "f0_5": metrics.f0_5,
        "f1_display": round_half_up(metrics.f1),
        "f0_5_display": round_half_up(metrics.f0_5),
        "tolerance_frac": tolerance_frac,
        "rootcause": rootcause,
    }


def write_metrics(metrics: dict, out_dir, label: str = "run"):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    table = metrics_table([(label, metrics["tp"], metrics["fp"], metrics["fn"])])
    with open(os.path.join(out_dir, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
