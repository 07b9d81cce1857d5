"""Input validation helpers shared by the estimators."""

import numpy as np
import pandas as pd

__all__ = ["as_categorical_frame", "series_times"]


def as_categorical_frame(X) -> pd.DataFrame:
    """Coerce input to a DataFrame of categorical string cells.

    Accepts a DataFrame, a dict of columns, or a 2D array. Every cell is
    rendered with ``str`` (values are opaque symbols, compared verbatim).
    Raises ValueError on missing cells because words cannot span gaps.
    """
    if isinstance(X, pd.DataFrame):
        frame = X
    elif isinstance(X, dict):
        frame = pd.DataFrame(X)
    else:
        arr = np.asarray(X)
        if arr.ndim != 2:
            raise ValueError("expected a 2D table of time x sensor values")
        frame = pd.DataFrame(arr, columns=[f"Sensor{i}" for i in range(arr.shape[1])])
    if frame.shape[1] < 1:
        raise ValueError("series has no sensor columns")
    if frame.isna().any().any():
        raise ValueError("incomplete series: missing cells are not allowed")
    out = frame.astype(str)
    if (out == "").any().any():
        raise ValueError("incomplete series: empty cells are not allowed")
    return out


def series_times(frame: pd.DataFrame) -> np.ndarray:
    """Integer time labels for the rows of a series.

    An integer index is used as-is (and must be strictly increasing);
    anything else is treated as an ordinal position 0..T-1.
    """
    idx = frame.index
    if pd.api.types.is_integer_dtype(idx.dtype):
        times = np.asarray(idx, dtype=np.int64)
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("time index must be strictly increasing")
        return times
    return np.arange(len(frame), dtype=np.int64)
