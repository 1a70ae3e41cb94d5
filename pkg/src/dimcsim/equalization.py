"""Pre-processing and pre-coding blocks composable with any detector.

Receiver side: the m-th order forward-difference operator (suppresses the
slow diffusive tail and the constant noise floor) and decision-feedback
ISI subtraction.  Transmitter side: emission adaptation against a constant
receiver threshold, and two-type destructive pre-equalization.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_bits, check_series
from .types import EmissionSchedule, SampleSeries, TapVector


def difference_matrix(size: int) -> np.ndarray:
    """Bidiagonal forward-difference matrix: -1 on the diagonal, +1 on the
    superdiagonal, so the last row is -1 alone."""
    d = -np.eye(size)
    d += np.eye(size, k=1)
    return d


def apply_difference(values: np.ndarray, order: int) -> np.ndarray:
    """Apply the forward-difference operator `order` times along the last
    axis.  order=0 is the identity.  Equivalent to multiplying by the
    matrix power, in O(order * length) time."""
    if order < 0:
        raise ValueError(f"derivative order must be >= 0, got {order}")
    out = np.array(values, dtype=float, copy=True)
    for _ in range(order):
        out[..., :-1] = out[..., 1:] - out[..., :-1]
        out[..., -1] = -out[..., -1]
    return out


def derivative_apply(y, order: int):
    """m-th order discrete derivative of a sample series (all channels)."""
    if isinstance(y, SampleSeries):
        return SampleSeries(apply_difference(np.asarray(y.channels, dtype=float), order), y.block_symbols)
    return apply_difference(np.asarray(y, dtype=float), order)


def derivative_taps(h: TapVector, order: int) -> TapVector | np.ndarray:
    """Differenced tap vector, for inspecting the tail compression the
    operator buys.  Returns a plain array (entries may be negative)."""
    return apply_difference(np.asarray(h.taps if isinstance(h, TapVector) else h, dtype=float), order)


class DerivativeOperator(BaseEstimator, TransformerMixin):
    """Forward-difference pre-processor as a scikit-learn transformer."""

    def __init__(self, order: int = 1):
        self.order = order

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return derivative_apply(X, self.order)

    def matrix(self, size: int) -> np.ndarray:
        return np.linalg.matrix_power(difference_matrix(size), self.order)


def symbol_isi_taps(taps: np.ndarray, n: int) -> np.ndarray:
    """Per-sample ISI weights: row q, column i-2 holds the tap seen on the
    q-th sample of a symbol from the emission i symbols earlier (i >= 2)."""
    taps = np.asarray(taps, dtype=float)
    memory = taps.size // n
    weights = np.zeros((n, max(memory - 1, 0)))
    for i in range(2, memory + 1):
        weights[:, i - 2] = taps[(i - 1) * n : i * n]
    return weights


def isi_means_from_history(weights: np.ndarray, emissions: np.ndarray) -> np.ndarray:
    """Expected ISI on each sample of the current symbol given the fed-back
    emission magnitudes of the previous symbols (most recent first)."""
    depth = min(weights.shape[1], emissions.size)
    if depth == 0:
        return np.zeros(weights.shape[0])
    return weights[:, :depth] @ emissions[:depth]


def dfe_subtract(
    y,
    decided_emissions: np.ndarray,
    taps,
    n: int,
    feedback_memory: Optional[int] = None,
) -> np.ndarray:
    """Subtract the expected inter-symbol interference given past decisions.

    decided_emissions[k] is the emission magnitude attributed to symbol k
    (e.g. 0 or 2M for on-off signaling).  Only emissions within the
    feedback memory window contribute.  Returns the corrected series
    (single channel, may be negative: no clamping).
    """
    series = check_series(y, n)
    if series.shape[0] != 1:
        raise ValueError("dfe_subtract operates on a single-channel series")
    series = series[0].copy()
    taps = np.asarray(taps.taps if isinstance(taps, TapVector) else taps, dtype=float)
    weights = symbol_isi_taps(taps, n)
    memory = weights.shape[1]
    depth = memory if feedback_memory is None else min(feedback_memory, memory)
    emissions = np.asarray(decided_emissions, dtype=float)
    s = series.size // n
    for k in range(s):
        lo = max(0, k - depth)
        hist = emissions[lo:k][::-1]
        series[k * n : (k + 1) * n] -= isi_means_from_history(weights, hist)
    return series


def atract_precode(
    bits,
    taps,
    n: int,
    molecules_per_bit: float,
    design_level: Optional[float] = None,
) -> EmissionSchedule:
    """Transmitter-side adaptation against a constant receiver threshold.

    For each one-bit the emission is scaled so the expected symbol count at
    the receiver stays at a constant design level once the predicted ISI
    from earlier emissions is accounted for; zero-bits stay silent.  The
    finished schedule is rescaled so the average spend is exactly
    molecules_per_bit per bit (the adaptation law is homogeneous in the
    design level, so the rescale does not change its shape).
    """
    bits = check_bits(bits)
    taps = np.asarray(taps.taps if isinstance(taps, TapVector) else taps, dtype=float)
    if taps.size % n:
        raise ValueError(f"tap count {taps.size} is not a multiple of n={n}")
    first = taps[:n].sum()
    if first <= 0:
        raise ValueError("first-symbol tap mass must be positive")
    memory = taps.size // n
    # Per-symbol tap mass for emissions i symbols back (i >= 2).
    lag_mass = np.array([taps[(i - 1) * n : i * n].sum() for i in range(2, memory + 1)])
    target = design_level if design_level is not None else 2.0 * molecules_per_bit * first
    s = bits.size
    emissions = np.zeros(s)
    for k in range(s):
        if not bits[k]:
            continue
        depth = min(lag_mass.size, k)
        isi = lag_mass[:depth] @ emissions[k - depth : k][::-1] if depth else 0.0
        emissions[k] = max(0.0, target - isi) / first
    total = emissions.sum()
    if total > 0:
        emissions *= molecules_per_bit * s / total
    x = np.zeros((1, s * n))
    x[0, np.arange(s) * n] = emissions
    return EmissionSchedule(x, s)


def ab_preequalize(
    primary: EmissionSchedule,
    delay_samples: int,
    scale: float,
) -> EmissionSchedule:
    """Append a second molecule type carrying scaled, delayed copies of the
    primary emissions; the paired receiver statistic y_A - y_B imitates
    destructive interference and suppresses the channel tail."""
    if primary.num_channels != 1:
        raise ValueError("a-b pre-equalization expects a single-type schedule")
    if delay_samples < 0:
        raise ValueError(f"delay must be nonnegative, got {delay_samples}")
    if not 0.0 <= scale < 1.0:
        raise ValueError(f"scale must be in [0, 1), got {scale}")
    a = np.asarray(primary.channels[0], dtype=float)
    b = np.zeros_like(a)
    if scale > 0 and delay_samples < a.size:
        if delay_samples == 0:
            b[:] = scale * a
        else:
            b[delay_samples:] = scale * a[:-delay_samples]
    return EmissionSchedule(np.stack([a, b]), primary.block_symbols)


def ab_combine(y) -> np.ndarray:
    """Receiver statistic for a-b links: type-A minus type-B counts (signed)."""
    series = check_series(y)
    if series.shape[0] != 2:
        raise ValueError(f"a-b combining needs exactly 2 channels, got {series.shape[0]}")
    return (series[0] - series[1])[None, :]
