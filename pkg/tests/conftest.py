import numpy as np
import pandas as pd
import pytest

from catseq import SentenceTokenizer


@pytest.fixture
def two_sensor_frame():
    # 6 steps x 2 sensors, 3 distinct values each
    return pd.DataFrame(
        {
            "A": ["0", "1", "2", "0", "1", "2"],
            "B": ["x", "x", "y", "z", "x", "y"],
        }
    )


@pytest.fixture
def two_sensor_corpus(two_sensor_frame):
    tok = SentenceTokenizer(word_length=3).fit(two_sensor_frame)
    return tok, tok.transform(two_sensor_frame)


def periodic_frame(patterns: dict, length: int) -> pd.DataFrame:
    """Deterministic periodic multi-sensor series from per-sensor cycles."""
    data = {
        name: [str(pat[t % len(pat)]) for t in range(length)]
        for name, pat in patterns.items()
    }
    return pd.DataFrame(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
