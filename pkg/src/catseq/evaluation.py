"""Event-level evaluation: truth matching, F-scores, root-cause hit rates."""

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

__all__ = [
    "GroundTruthAnomaly",
    "MatchResult",
    "Metrics",
    "match_events",
    "f_beta",
    "compute_metrics",
    "rootcause_hit_rate",
    "round_half_up",
    "metrics_table",
    "load_truths",
    "save_truths",
]


@dataclass(frozen=True)
class GroundTruthAnomaly:
    start: int
    end: int
    culprit_sensors: frozenset | None = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("truth start after end")


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list  # (event, truth) matched pairs


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    f0_5: float


def match_events(events, truths, series_length: int, tolerance_frac: float = 0.01) -> MatchResult:
    """Match detected events to ground-truth anomalies one-to-one.

    A truth is detected when some event overlaps its window or starts within
    ``tolerance_frac * series_length`` of its start. Events are processed in
    start order and each takes the unmatched truth with the nearest start;
    events left without a truth are false positives, truths left without an
    event are false negatives.
    """
    if tolerance_frac <= 0:
        raise ValueError("tolerance_frac must be positive")
    tol = tolerance_frac * series_length
    unmatched = list(truths)
    pairs = []
    for event in sorted(events, key=lambda e: e.start):
        candidates = [
            truth
            for truth in unmatched
            if abs(event.start - truth.start) <= tol
            or (event.start <= truth.end and event.end >= truth.start)
        ]
        if not candidates:
            continue
        best = min(candidates, key=lambda truth: (abs(event.start - truth.start), truth.start))
        unmatched.remove(best)
        pairs.append((event, best))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(list(events)) - tp, fn=len(list(truths)) - tp, pairs=pairs)


def f_beta(tp: int, fp: int, fn: int, beta: float) -> float:
    """F_beta from counts; 0 when the score is undefined."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be nonnegative")
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall)


def compute_metrics(tp: int, fp: int, fn: int) -> Metrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return Metrics(
        precision=precision,
        recall=recall,
        f1=f_beta(tp, fp, fn, 1.0),
        f0_5=f_beta(tp, fp, fn, 0.5),
    )


def rootcause_hit_rate(ranking, truth: GroundTruthAnomaly, top_frac: float = 0.10) -> float:
    """Fraction of a truth's culprit sensors inside the top slice of a ranking."""
    if truth.culprit_sensors is None:
        raise ValueError("truth carries no culprit sensor annotation")
    if not truth.culprit_sensors:
        return 0.0
    n_sensors = len(ranking.ordering)
    top_count = math.ceil(top_frac * n_sensors - 1e-9)
    top = set(ranking.top(max(top_count, 1)))
    return len(top & set(truth.culprit_sensors)) / len(truth.culprit_sensors)


def round_half_up(x: float, decimals: int = 2) -> float:
    """Display rounding with halves away from zero (0.625 -> 0.63)."""
    q = Decimal(10) ** -decimals
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def metrics_table(rows) -> str:
    """Plain-text table of (label, tp, fp, fn, f1, f0.5) rows."""
    header = f"{'dataset':<24}{'TP':>5}{'FP':>5}{'FN':>5}{'F1':>8}{'F0.5':>8}"
    lines = [header, "-" * len(header)]
    for label, tp, fp, fn in rows:
        m = compute_metrics(tp, fp, fn)
        lines.append(
            f"{label:<24}{tp:>5}{fp:>5}{fn:>5}"
            f"{round_half_up(m.f1):>8.2f}{round_half_up(m.f0_5):>8.2f}"
        )
    return "\n".join(lines) + "\n"


def load_truths(path) -> list:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out = []
    for item in raw:
        culprits = item.get("culprit_sensors")
        out.append(
            GroundTruthAnomaly(
                start=int(item["start"]),
                end=int(item["end"]),
                culprit_sensors=frozenset(culprits) if culprits is not None else None,
            )
        )
    return out


def save_truths(truths, path):
    payload = []
    for t in truths:
        payload.append(
            {
                "start": t.start,
                "end": t.end,
                "culprit_sensors": sorted(t.culprit_sensors) if t.culprit_sensors is not None else None,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
