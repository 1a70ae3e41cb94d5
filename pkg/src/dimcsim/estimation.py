"""Pilot-based channel estimation and timing-offset sweeps.

Coherent detectors need the tap vector; when it is not handed over as an
oracle it is estimated from a known pilot block by linear least squares,
with the noise floor taken from a leading silent interval.  The offset
sweep measures how detectors configured for a synchronized receiver
degrade when the actual channel lags them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from .channel import build_taps, simulate_arrivals
from .modulation import SchemeDescriptor, modulate
from .types import (
    ChannelGeometry,
    EmissionSchedule,
    NoiseModel,
    PowerBudget,
    SamplingGrid,
    TapVector,
)

DEFAULT_SILENT_PREFIX = 50


class EstimationError(ValueError):
    """Unidentifiable estimation problem (e.g. all-zero pilots)."""


@dataclass(frozen=True)
class PilotBlock:
    """Known pilot bit pattern preceding a data block."""

    bits: tuple
    silent_prefix: int = DEFAULT_SILENT_PREFIX

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("pilot block needs at least one symbol")
        if self.silent_prefix < 0:
            raise ValueError("silent prefix length must be nonnegative")


def default_pilot_bits(length: int, max_run: int = 4) -> np.ndarray:
    """Fixed pseudorandom pilot pattern with runs capped at max_run.

    The pattern is a deterministic constant for a given length so results
    carrying it are reproducible.
    """
    rng = np.random.default_rng(0x9E3779B9)
    bits = rng.integers(0, 2, length).astype(np.uint8)
    run = 1
    for i in range(1, length):
        run = run + 1 if bits[i] == bits[i - 1] else 1
        if run > max_run:
            bits[i] ^= 1
            run = 1
    return bits


class LeastSquaresChannelEstimator(BaseEstimator):
    """Linear least squares tap estimation from known emissions.

    fit(emissions, observed) solves min_h ||y - X h - lam*1||^2 where X is
    the convolution matrix of the known emission sequence; negative
    entries of the solution clamp to zero.  The noise rate lam is the
    sample mean over the leading silent_prefix samples (0 if the prefix
    is empty).  Estimates land in taps_ and noise_rate_.
    """

    def __init__(self, num_taps: int, silent_prefix: int = DEFAULT_SILENT_PREFIX):
        self.num_taps = num_taps
        self.silent_prefix = silent_prefix

    def fit(self, emissions, observed):
        x = np.ravel(np.asarray(emissions, dtype=float))
        y = np.ravel(np.asarray(observed, dtype=float))
        if x.size != y.size:
            raise ValueError(f"emissions ({x.size}) and observations ({y.size}) differ in length")
        if self.silent_prefix >= x.size:
            raise ValueError("silent prefix swallows the whole record")
        if np.any(x[: self.silent_prefix] != 0):
            raise ValueError("the silent prefix must contain no emissions")
        lam = float(y[: self.silent_prefix].mean()) if self.silent_prefix else 0.0
        cols = [np.concatenate([np.zeros(k), x[: x.size - k]]) for k in range(self.num_taps)]
        design = np.stack(cols, axis=1)
        if not design.any():
            raise EstimationError("all-zero pilot emissions are unidentifiable")
        solution, _, rank, _ = np.linalg.lstsq(design, y - lam, rcond=None)
        if rank < self.num_taps:
            raise EstimationError(
                f"pilot design matrix is rank deficient ({rank} < {self.num_taps})"
            )
        self.taps_ = TapVector(np.clip(solution, 0.0, None))
        self.noise_rate_ = lam
        return self

    def predict_means(self, emissions) -> np.ndarray:
        """Expected counts for a new emission sequence under the fit."""
        x = np.ravel(np.asarray(emissions, dtype=float))
        return np.convolve(x, self.taps_.taps)[: x.size] + self.noise_rate_


def ls_channel_estimate(
    emissions,
    observed,
    num_taps: int,
    silent_prefix: int = DEFAULT_SILENT_PREFIX,
) -> Tuple[TapVector, float]:
    """Functional form of LeastSquaresChannelEstimator.fit."""
    est = LeastSquaresChannelEstimator(num_taps, silent_prefix).fit(emissions, observed)
    return est.taps_, est.noise_rate_


def pilot_channel_estimate(
    geometry: ChannelGeometry,
    grid: SamplingGrid,
    molecules_per_bit: float,
    lambda_s: float,
    pilot_symbols: int,
    seed,
    silent_prefix: int = DEFAULT_SILENT_PREFIX,
) -> Tuple[TapVector, float]:
    """Simulate one pilot transmission and estimate taps and noise rate.

    The pilot is the fixed on-off pattern of default_pilot_bits at the
    working power level, preceded by a silent interval for the noise-rate
    estimate.
    """
    if pilot_symbols < grid.memory:
        raise ValueError(f"pilot needs at least memory={grid.memory} symbols")
    bits = default_pilot_bits(pilot_symbols)
    scheme = SchemeDescriptor("bcsk")
    schedule = modulate(bits, scheme, PowerBudget(molecules_per_bit), grid)
    x = np.concatenate([np.zeros(silent_prefix), schedule.channels[0]])
    taps = build_taps(geometry, grid)
    padded = EmissionSchedule(x[None, :], 1)
    y = simulate_arrivals(padded, taps, NoiseModel(lambda_s), seed)
    est = LeastSquaresChannelEstimator(grid.num_taps, silent_prefix).fit(
        x, y.channels[0]
    )
    return est.taps_, est.noise_rate_


def offset_sweep(config, tau_grid: Sequence[float], seed: Optional[int] = None) -> List:
    """BER at each receiver clock lag, detectors kept blind to the lag.

    Delegates to the harness sweep with the tau axis; a single-point grid
    {0} reproduces the synchronized run bit for bit under the same seed.
    """
    import dataclasses

    from . import harness

    cfg = dataclasses.replace(config, sweep_axis="tau", sweep_grid=tuple(float(t) for t in tau_grid))
    return harness.sweep(cfg, seed=seed)
