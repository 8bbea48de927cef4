"""Tiny helpers for moving float64 matrices through JSON documents.

Matrices travel as row-major nested lists. Python floats survive a JSON
round trip exactly (shortest-round-trip formatting), so serialization is
lossless.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch


def mat_to_lists(M: np.ndarray) -> list:
    return np.asarray(M, dtype=float).tolist()


def mat_from_lists(obj, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    M = np.asarray(obj, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={M.ndim}")
    if rows is not None and M.shape[0] != rows:
        raise DimensionMismatch(f"expected {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise DimensionMismatch(f"expected {cols} cols, got {M.shape[1]}")
    return M


def vec_from_lists(obj, length: int | None = None) -> np.ndarray:
    v = np.asarray(obj, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise DimensionMismatch(f"expected length {length}, got {v.shape[0]}")
    return v
