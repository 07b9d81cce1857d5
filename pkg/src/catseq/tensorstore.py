"""Flat binary persistence for named float64 arrays.

Layout: one ``.bin`` file with the raw row-major buffers back to back, plus a
JSON manifest mapping each name to (shape, offset, length). Deliberately
timestamp-free so artifacts are byte-reproducible.
"""

import json
import os

import numpy as np

__all__ = ["save_tensors", "load_tensors"]


def save_tensors(tensors: dict, bin_path, manifest_path=None) -> dict:
    """Write named arrays to ``bin_path``; returns the manifest dict.

    When ``manifest_path`` is given the manifest is also written there as
    JSON. Arrays are stored as row-major 8-byte floats except integer arrays,
    which keep int64.
    """
    manifest = {"tensors": {}}
    offset = 0
    with open(bin_path, "wb") as fh:
        for name in sorted(tensors):
            arr = np.asarray(tensors[name])
            if np.issubdtype(arr.dtype, np.integer):
                arr = arr.astype(np.int64)
                dtype = "int64"
            else:
                arr = arr.astype(np.float64)
                dtype = "float64"
            buf = np.ascontiguousarray(arr).tobytes()
            fh.write(buf)
            manifest["tensors"][name] = {
                "shape": list(arr.shape),
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(buf),
            }
            offset += len(buf)
    if manifest_path is not None:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return manifest


def load_tensors(bin_path, manifest) -> dict:
    """Read arrays back; ``manifest`` is a dict or a path to the JSON file."""
    if isinstance(manifest, (str, os.PathLike)):
        with open(manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
    out = {}
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    for name, meta in manifest["tensors"].items():
        raw = blob[meta["offset"] : meta["offset"] + meta["nbytes"]]
        arr = np.frombuffer(raw, dtype=meta["dtype"]).reshape(meta["shape"]).copy()
        out[name] = arr
    return out
