"""Letters, words, sentences: the text view of a categorical time series.

A *sensor* is one categorical column. The value it reports at one time step
is a *letter*; the same value string reported by two sensors is two distinct
letters. A *word* is the sequence of ``word_length`` consecutive letters a
sensor said, indexed by the last letter's time. The set of words all sensors
say at one time is a *sentence*. Each sensor's vocabulary additionally gets
two reserved tokens for inference-time novelty: an ``unknown_word`` token
(shape never seen, letters all known) and an ``unknown_letter`` token (at
least one letter never seen).
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import as_categorical_frame, series_times

TRUE_WORD = "true_word"
UNKNOWN_WORD = "unknown_word"
UNKNOWN_LETTER = "unknown_letter"


@dataclass(frozen=True)
class Word:
    """One sensor's word: either a concrete letter sequence or a reserved token."""

    sensor: str
    letters: tuple = ()
    kind: str = TRUE_WORD

    def text(self) -> str:
        """Canonical text form, e.g. ``Sensor0_0_2_1_2``.

        Underscores inside letter values are escaped as ``\\_`` so the text
        form of a true word is unambiguous. Reserved tokens render as
        ``<sensor>_unknown_word`` / ``<sensor>_unknown_letter``.
        """
        if self.kind != TRUE_WORD:
            return f"{self.sensor}_{self.kind}"
        return "_".join([self.sensor] + [v.replace("_", "\\_") for v in self.letters])

    @property
    def is_unknown(self) -> bool:
        return self.kind != TRUE_WORD


def parse_word_text(text: str, word_length: int) -> Word:
    """Invert :meth:`Word.text` for a true word of known length.

    The sensor name may itself contain underscores, so fields are taken from
    the right: the last ``word_length`` unescaped-underscore-separated fields
    are the letters, the rest is the sensor name.
    """
    fields = []
    cur = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] == "_":
            cur.append("_")
            i += 2
        elif ch == "_":
            fields.append("".join(cur))
            cur = []
            i += 1
        else:
            cur.append(ch)
            i += 1
    fields.append("".join(cur))
    if len(fields) < word_length + 1:
        raise ValueError(f"cannot parse {text!r} as a word of length {word_length}")
    letters = tuple(fields[-word_length:])
    sensor = "_".join(fields[:-word_length])
    return Word(sensor=sensor, letters=letters)


@dataclass(frozen=True)
class Sentence:
    """All sensors' words at one time step.

    ``observed`` keeps the raw letter sequences even when a word was replaced
    by a reserved token, so edit-distance scoring can use what was actually
    said.
    """

    time: int
    words: dict
    observed: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.observed:
            object.__setattr__(
                self, "observed", {s: w.letters for s, w in self.words.items()}
            )


class Vocabulary:
    """Per-sensor word sets plus a global positive-integer encoding.

    Index 0 is reserved for masking; words occupy 1..m with each sensor's
    words (true words in first-seen order, then its two unknown tokens)
    forming one contiguous block. Per-sensor vocabularies are disjoint by
    construction, so the blocks partition 1..m.
    """

    def __init__(self, sensor_order, words_by_sensor):
        self.sensor_order = tuple(sensor_order)
        self.words_by_sensor = {s: tuple(words_by_sensor[s]) for s in self.sensor_order}
        self._index = {}
        self._by_index = [None]  # global index i -> word, index 0 = mask
        self.slices = {}
        nxt = 1
        for s in self.sensor_order:
            start = nxt
            for w in self.words_by_sensor[s]:
                self._index[w] = nxt
                self._by_index.append(w)
                nxt += 1
            self.slices[s] = (start, nxt)

    @classmethod
    def build(cls, sensor_order, true_words_by_sensor):
        """Append the two reserved tokens to each sensor's true words."""
        words = {}
        for s in sensor_order:
            words[s] = tuple(true_words_by_sensor[s]) + (
                Word(s, kind=UNKNOWN_WORD),
                Word(s, kind=UNKNOWN_LETTER),
            )
        return cls(sensor_order, words)

    @property
    def size(self) -> int:
        """Total word count m, unknown tokens included."""
        return len(self._by_index) - 1

    def index_of(self, word: Word) -> int:
        return self._index[word]

    def __contains__(self, word: Word) -> bool:
        return word in self._index

    def word_at(self, index: int) -> Word:
        if not 1 <= index <= self.size:
            raise IndexError(f"word index {index} outside 1..{self.size}")
        return self._by_index[index]

    def sensor_slice(self, sensor: str) -> tuple:
        """Half-open global-index range ``(start, stop)`` of one sensor's block."""
        return self.slices[sensor]

    def unknown_word_index(self, sensor: str) -> int:
        return self.slices[sensor][1] - 2

    def unknown_letter_index(self, sensor: str) -> int:
        return self.slices[sensor][1] - 1

    def unknown_indices(self) -> np.ndarray:
        """Global indices of all reserved tokens."""
        out = []
        for s in self.sensor_order:
            out.extend([self.unknown_word_index(s), self.unknown_letter_index(s)])
        return np.array(sorted(out), dtype=np.int64)

    def to_json_dict(self) -> dict:
        return {
            "sensor_order": list(self.sensor_order),
            "words": {
                s: [list(w.letters) for w in self.words_by_sensor[s] if not w.is_unknown]
                for s in self.sensor_order
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Vocabulary":
        sensor_order = data["sensor_order"]
        true_words = {
            s: [Word(s, tuple(ls)) for ls in data["words"][s]] for s in sensor_order
        }
        return cls.build(sensor_order, true_words)

    def content_hash(self) -> str:
        """Stable fingerprint used to detect schema drift between artifacts."""
        blob = json.dumps(self.to_json_dict(), sort_keys=True, ensure_ascii=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self.sensor_order == other.sensor_order
            and self.words_by_sensor == other.words_by_sensor
        )

    def __len__(self):
        return self.size


class TokenizedCorpus:
    """A time-ordered sequence of sentences in integer-encoded form.

    ``token_ids[i, j]`` is the global vocabulary index of the word sensor
    ``sensor_order[j]`` says in sentence ``i``; ``observed[i][j]`` is the raw
    letter tuple behind it (identical to the word's letters unless the word
    was replaced by a reserved token).
    """

    def __init__(self, word_length, vocabulary, alphabets, times, token_ids, observed):
        self.word_length = int(word_length)
        self.vocabulary = vocabulary
        self.alphabets = {s: frozenset(a) for s, a in alphabets.items()}
        self.times = np.asarray(times, dtype=np.int64)
        self.token_ids = np.asarray(token_ids, dtype=np.int64)
        self.observed = observed
        if self.token_ids.shape != (len(self.times), len(vocabulary.sensor_order)):
            raise ValueError("token_ids shape inconsistent with times/sensors")

    @property
    def sensor_order(self):
        return self.vocabulary.sensor_order

    def __len__(self):
        return len(self.times)

    def sentence(self, i: int) -> Sentence:
        words = {}
        observed = {}
        for j, s in enumerate(self.sensor_order):
            words[s] = self.vocabulary.word_at(int(self.token_ids[i, j]))
            observed[s] = tuple(self.observed[i][j])
        return Sentence(time=int(self.times[i]), words=words, observed=observed)

    @property
    def sentences(self):
        return [self.sentence(i) for i in range(len(self))]


class SentenceTokenizer(BaseEstimator, TransformerMixin):
    """Convert a categorical time series into a corpus of sentences.

    Parameters
    ----------
    word_length : int, default=5
        Number of consecutive letters per word. A series of T rows yields
        T - word_length + 1 sentences, indexed by each word's last letter.

    Attributes
    ----------
    sensor_order_ : tuple of str
        Column order fixed at fit time; reused for every matrix layout.
    alphabets_ : dict
        Per-sensor set of letter values seen during fit.
    vocabulary_ : Vocabulary
        All words seen during fit plus two reserved tokens per sensor.
    """

    def __init__(self, word_length: int = 5):
        self.word_length = word_length

    def _validate(self, X) -> pd.DataFrame:
        if self.word_length < 1:
            raise ValueError("word_length must be >= 1")
        frame = as_categorical_frame(X)
        if len(frame) < self.word_length:
            raise ValueError(
                f"series too short: {len(frame)} rows < word_length {self.word_length}"
            )
        return frame

    def fit(self, X, y=None):
        """Learn sensor order, alphabets and the word vocabulary from X."""
        frame = self._validate(X)
        self.sensor_order_ = tuple(str(c) for c in frame.columns)
        if len(set(self.sensor_order_)) != len(self.sensor_order_):
            raise ValueError("duplicate sensor column names")
        alphabets = {}
        true_words = {}
        for j, s in enumerate(self.sensor_order_):
            col = frame.iloc[:, j].to_numpy()
            alphabets[s] = frozenset(col.tolist())
            seen = {}
            L = self.word_length
            for t in range(L - 1, len(col)):
                letters = tuple(col[t - L + 1 : t + 1])
                w = Word(s, letters)
                if w not in seen:
                    seen[w] = None
            true_words[s] = list(seen)
        self.alphabets_ = alphabets
        self.vocabulary_ = Vocabulary.build(self.sensor_order_, true_words)
        return self

    def transform(self, X) -> TokenizedCorpus:
        """Tokenize a series against the fitted vocabulary.

        Words absent from the vocabulary are replaced by the owning sensor's
        ``unknown_word`` token when all their letters were seen at fit time,
        and by ``unknown_letter`` otherwise (letter novelty dominates). The
        raw letter sequences are kept alongside the tokens.
        """
        check_is_fitted(self, "vocabulary_")
        frame = self._validate(X)
        cols = tuple(str(c) for c in frame.columns)
        if cols != self.sensor_order_:
            raise ValueError(
                f"schema mismatch: expected columns {self.sensor_order_}, got {cols}"
            )
        times_all = series_times(frame)
        L = self.word_length
        T = len(frame)
        n = T - L + 1
        S = len(self.sensor_order_)
        token_ids = np.zeros((n, S), dtype=np.int64)
        observed = [[None] * S for _ in range(n)]
        vocab = self.vocabulary_
        for j, s in enumerate(self.sensor_order_):
            col = frame.iloc[:, j].to_numpy()
            alphabet = self.alphabets_[s]
            unknown_word_ix = vocab.unknown_word_index(s)
            unknown_letter_ix = vocab.unknown_letter_index(s)
            for i in range(n):
                letters = tuple(col[i : i + L])
                w = Word(s, letters)
                if w in vocab:
                    token_ids[i, j] = vocab.index_of(w)
                elif all(v in alphabet for v in letters):
                    token_ids[i, j] = unknown_word_ix
                else:
                    token_ids[i, j] = unknown_letter_ix
                observed[i][j] = letters
        observed = [tuple(row) for row in observed]
        return TokenizedCorpus(
            word_length=L,
            vocabulary=vocab,
            alphabets=self.alphabets_,
            times=times_all[L - 1 :],
            token_ids=token_ids,
            observed=observed,
        )

    def to_json_dict(self) -> dict:
        check_is_fitted(self, "vocabulary_")
        return {
            "word_length": self.word_length,
            "sensor_order": list(self.sensor_order_),
            "alphabets": {s: sorted(self.alphabets_[s]) for s in self.sensor_order_},
            "vocabulary": self.vocabulary_.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SentenceTokenizer":
        tok = cls(word_length=int(data["word_length"]))
        tok.sensor_order_ = tuple(data["sensor_order"])
        tok.alphabets_ = {s: frozenset(v) for s, v in data["alphabets"].items()}
        tok.vocabulary_ = Vocabulary.from_json_dict(data["vocabulary"])
        return tok

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SentenceTokenizer":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def ordinal_rank_column(frame: pd.DataFrame, column, calibration_steps: int = 1000):
    """Replace a low-cardinality numeric column by ordinal categories.

    The distinct values among the first ``calibration_steps`` rows are sorted
    ascending and named "0".."c-1"; every later value maps to the category of
    the nearest calibration value, ties resolved toward the lower category.
    """
    if column not in frame.columns:
        raise KeyError(f"no column {column!r}")
    if calibration_steps < 1:
        raise ValueError("calibration_steps must be >= 1")
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any():
        raise ValueError(f"column {column!r} is not numeric")
    cal = np.unique(values[: min(calibration_steps, len(values))])
    # nearest calibration value; equidistant points take the lower category
    pos = np.searchsorted(cal, values)
    pos = np.clip(pos, 0, len(cal) - 1)
    lower = np.clip(pos - 1, 0, len(cal) - 1)
    take_lower = np.abs(values - cal[lower]) <= np.abs(cal[pos] - values)
    cats = np.where(take_lower, lower, pos)
    out = frame.copy()
    out[column] = [str(int(c)) for c in cats]
    return out
