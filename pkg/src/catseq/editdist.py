"""Levenshtein distance between words and forecast-vs-actual sentence scores."""

import numpy as np

from .corpus import Word

__all__ = ["levenshtein_letters", "levenshtein", "forecast_anomaly_score"]


def levenshtein_letters(a, b) -> int:
    """Unit-cost edit distance between two letter sequences."""
    if len(a) == 0:
        return len(b)
    if len(b) == 0:
        return len(a)
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def _letters_of(word: Word, observed, word_length):
    if not word.is_unknown:
        return word.letters
    # reserved tokens carry no letters; fall back to what was actually said
    if observed is not None:
        return tuple(observed)
    return None


def levenshtein(w: Word, v: Word, word_length: int, observed_w=None, observed_v=None) -> int:
    """Edit distance between two words of the same sensor.

    Reserved tokens have no letter sequence of their own: the retained
    observed letters are used when available, otherwise the distance
    defaults to ``word_length`` (every letter in doubt).
    """
    if w.sensor != v.sensor:
        raise ValueError(f"sensor mismatch: {w.sensor!r} vs {v.sensor!r}")
    a = _letters_of(w, observed_w, word_length)
    b = _letters_of(v, observed_v, word_length)
    if a is None or b is None:
        return int(word_length)
    return levenshtein_letters(a, b)


def forecast_anomaly_score(forecast, actual, word_length: int):
    """Summed per-sensor edit distance between a forecast and the actual sentence.

    Returns ``(score, contributions)`` where ``contributions[sensor]`` is that
    sensor's edit distance; the contributions sum to the score exactly.
    """
    if set(forecast.words) != set(actual.words):
        raise ValueError("sensor sets of forecast and actual sentence differ")
    contributions = {}
    for s in actual.words:
        contributions[s] = levenshtein(
            actual.words[s],
            forecast.words[s],
            word_length,
            observed_w=actual.observed.get(s),
            observed_v=forecast.observed.get(s),
        )
    return float(sum(contributions.values())), contributions


def batch_edit_distances(actual_ids, forecast_ids, observed, vocabulary, word_length):
    """Per-sensor edit distances for aligned (n, S) token-id arrays.

    ``observed[i][j]`` holds the raw letters behind ``actual_ids[i, j]``.
    Forecast ids index true words (or reserved tokens, scored as
    ``word_length``). Returns an (n, S) float array.
    """
    n, S = actual_ids.shape
    out = np.zeros((n, S), dtype=float)
    sensors = vocabulary.sensor_order
    cache = {}
    for i in range(n):
        for j in range(S):
            fid = int(forecast_ids[i, j])
            aid = int(actual_ids[i, j])
            fw = vocabulary.word_at(fid)
            if fw.is_unknown:
                out[i, j] = word_length
                continue
            aw = vocabulary.word_at(aid)
            if not aw.is_unknown:
                if aid == fid:
                    continue
                key = (aid, fid)
                if key not in cache:
                    cache[key] = levenshtein_letters(aw.letters, fw.letters)
                out[i, j] = cache[key]
            else:
                out[i, j] = levenshtein_letters(observed[i][j], fw.letters)
            if sensors[j] != fw.sensor:
                raise ValueError("forecast word outside its sensor's vocabulary")
    return out
