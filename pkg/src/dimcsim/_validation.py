"""Input validation helpers shared by the estimator-style classes."""
from __future__ import annotations

import numpy as np

from .types import SampleSeries


def check_bits(bits) -> np.ndarray:
    """Coerce to a 1-D uint8 array of 0/1 values."""
    arr = np.asarray(bits)
    if arr.dtype.kind == "U" or arr.dtype.kind == "S":
        arr = np.array([int(c) for c in "".join(np.atleast_1d(arr))])
    arr = np.ravel(arr)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bit sequences may only contain 0 and 1")
    return arr.astype(np.uint8)


def check_series(y, n: int | None = None) -> np.ndarray:
    """Coerce a SampleSeries or array to a (channels, samples) float matrix.

    If n is given, the sample count must be a multiple of n.
    """
    if isinstance(y, SampleSeries):
        arr = np.asarray(y.channels, dtype=float)
    else:
        arr = np.atleast_2d(np.asarray(y, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D sample series, got ndim={arr.ndim}")
    if n is not None and (arr.shape[1] == 0 or arr.shape[1] % n):
        raise ValueError(
            f"series length {arr.shape[1]} is not a positive multiple of n={n}"
        )
    return arr


def check_single_channel(y, n: int | None = None) -> np.ndarray:
    """As check_series but insists on exactly one channel; returns 1-D."""
    arr = check_series(y, n)
    if arr.shape[0] != 1:
        raise ValueError(f"expected a single-channel series, got {arr.shape[0]} channels")
    return arr[0]


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)


def check_nonnegative(value: float, name: str) -> float:
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return float(value)
