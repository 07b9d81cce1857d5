"""From per-sentence anomaly scores to flagged times, events and suspect sensors."""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScoreSeries",
    "Threshold",
    "AnomalyEvent",
    "SuspectRanking",
    "calibrate_threshold",
    "flag_times",
    "cluster_events",
    "suspect_ranking",
    "ensemble_flag",
    "default_cluster_gap",
]


@dataclass
class ScoreSeries:
    """Anomaly scores over time with their per-sensor decomposition.

    ``contributions[i, j]`` is sensor ``sensor_order[j]``'s share of
    ``scores[i]``; rows sum to the score exactly (same arithmetic).
    """

    times: np.ndarray
    scores: np.ndarray
    contributions: np.ndarray
    sensor_order: tuple

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=float)
        self.contributions = np.asarray(self.contributions, dtype=float)
        if self.contributions.shape != (len(self.times), len(self.sensor_order)):
            raise ValueError("contributions shape mismatch")
        if len(self.scores) != len(self.times):
            raise ValueError("scores/times length mismatch")

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class Threshold:
    """alpha times a reference percentile of nominal scores."""

    value: float
    alpha: float = 1.25
    reference_percentile: float = 99.5
    percentile_value: float = 0.0


@dataclass
class AnomalyEvent:
    """A cluster of flagged times treated as one anomaly."""

    start: int
    end: int
    member_times: np.ndarray
    peak_score: float
    suspects: "SuspectRanking | None" = None


@dataclass
class SuspectRanking:
    """Sensors ordered by their summed contribution over suspected times."""

    scores: dict
    ordering: list = field(default_factory=list)

    def __post_init__(self):
        if not self.ordering:
            # descending score, ties broken by sensor name ascending
            self.ordering = sorted(self.scores, key=lambda s: (-self.scores[s], s))

    def top(self, count: int) -> list:
        return self.ordering[: max(int(count), 0)]


def calibrate_threshold(reference, alpha: float = 1.25, percentile: float = 99.5) -> Threshold:
    """Threshold = alpha x the given percentile of reference scores.

    The percentile uses linear interpolation between order statistics.
    Reference scores normally come from inference on the training or a
    validation series.
    """
    scores = reference.scores if isinstance(reference, ScoreSeries) else np.asarray(reference, dtype=float)
    if len(scores) == 0:
        raise ValueError("empty reference score series")
    pv = float(np.percentile(scores, percentile, method="linear"))
    return Threshold(value=alpha * pv, alpha=alpha, reference_percentile=percentile, percentile_value=pv)


def flag_times(series: ScoreSeries, threshold: Threshold) -> np.ndarray:
    """Times whose score strictly exceeds the threshold value."""
    mask = series.scores > threshold.value
    return series.times[mask]


def default_cluster_gap(series_length: int) -> int:
    """0.5% of the series length, at least 5."""
    return max(5, int(round(0.005 * series_length)))


def cluster_events(flagged_times, cluster_gap: int, score_series: ScoreSeries | None = None):
    """Merge flagged times whose gaps are at most ``cluster_gap`` into events.

    Events are returned ordered by start. ``peak_score`` is the maximum score
    over member times when a score series is supplied, else the count of
    members.
    """
    if cluster_gap < 1:
        raise ValueError("cluster_gap must be >= 1")
    times = np.unique(np.asarray(list(flagged_times), dtype=np.int64))
    if len(times) == 0:
        return []
    lookup = None
    if score_series is not None:
        lookup = dict(zip(score_series.times.tolist(), score_series.scores.tolist()))
    events = []
    start = 0
    breaks = np.nonzero(np.diff(times) > cluster_gap)[0]
    for b in np.append(breaks, len(times) - 1):
        member = times[start : b + 1]
        if lookup is not None:
            peak = max(lookup.get(int(t), 0.0) for t in member)
        else:
            peak = float(len(member))
        events.append(
            AnomalyEvent(start=int(member[0]), end=int(member[-1]), member_times=member, peak_score=peak)
        )
        start = b + 1
    return events


def suspect_ranking(series: ScoreSeries, times) -> SuspectRanking:
    """Sum each sensor's contributions over the suspected times and rank."""
    wanted = set(int(t) for t in times)
    unknown = wanted.difference(series.times.tolist())
    if unknown:
        raise ValueError(f"times not in score series: {sorted(unknown)[:5]}")
    mask = np.isin(series.times, np.fromiter(wanted, dtype=np.int64, count=len(wanted))) if wanted else np.zeros(len(series), dtype=bool)
    sums = series.contributions[mask].sum(axis=0) if mask.any() else np.zeros(len(series.sensor_order))
    return SuspectRanking(scores={s: float(v) for s, v in zip(series.sensor_order, sums)})


def ensemble_flag(flag_sets, policy: str = "any") -> np.ndarray:
    """Combine per-model flagged time sets.

    ``any`` takes the union; ``majority`` keeps times flagged by more than
    half of the members.
    """
    members = [set(int(t) for t in np.asarray(list(f), dtype=np.int64)) for f in flag_sets]
    if not members:
        raise ValueError("ensemble needs at least one member flag set")
    if policy == "any":
        combined = set().union(*members)
    elif policy == "majority":
        counts = {}
        for member in members:
            for t in member:
                counts[t] = counts.get(t, 0) + 1
        combined = {t for t, c in counts.items() if c > len(members) / 2}
    else:
        raise ValueError(f"unknown ensemble policy {policy!r}")
    return np.array(sorted(combined), dtype=np.int64)
