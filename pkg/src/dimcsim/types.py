"""Core value types shared by the channel, modulation and detection layers.

All objects here are immutable after construction; array payloads are
marked read-only so that concurrent trials can share them safely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ChannelGeometry:
    """Point transmitter to fully absorbing spherical receiver link.

    Distances are micrometers, the diffusion coefficient is um^2/s.
    """

    r0: float
    r_r: float
    diff_coef: float

    def __post_init__(self):
        if not self.r0 > self.r_r > 0:
            raise ValueError(
                f"need r0 > r_r > 0, got r0={self.r0}, r_r={self.r_r}"
            )
        if not self.diff_coef > 0:
            raise ValueError(f"diffusion coefficient must be positive, got {self.diff_coef}")

    @property
    def total_hit_probability(self) -> float:
        """Probability that an emitted molecule is ever absorbed (r_r / r0)."""
        return self.r_r / self.r0


@dataclass(frozen=True)
class SamplingGrid:
    """Receiver sampling layout for one modulation scheme.

    t_sym is the symbol duration in seconds, n the number of samples per
    symbol, memory the channel memory in symbols, and tau the receiver
    clock lag relative to the transmitter (seconds, may be negative).
    """

    t_sym: float
    n: int
    memory: int
    tau: float = 0.0

    def __post_init__(self):
        if not self.t_sym > 0:
            raise ValueError(f"t_sym must be positive, got {self.t_sym}")
        if self.n < 1:
            raise ValueError(f"samples per symbol must be >= 1, got {self.n}")
        if self.memory < 1:
            raise ValueError(f"channel memory must be >= 1 symbol, got {self.memory}")

    @property
    def t_sample(self) -> float:
        return self.t_sym / self.n

    @property
    def num_taps(self) -> int:
        return self.memory * self.n

    def with_tau(self, tau: float) -> "SamplingGrid":
        return SamplingGrid(self.t_sym, self.n, self.memory, tau)


@dataclass(frozen=True)
class TapVector:
    """Discrete channel impulse response: per-sample hit probabilities."""

    taps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taps", _frozen_array(self.taps))
        if self.taps.ndim != 1 or self.taps.size == 0:
            raise ValueError("taps must be a non-empty 1-D sequence")
        if np.any(self.taps < 0):
            raise ValueError("taps must be nonnegative")

    def __len__(self) -> int:
        return self.taps.size

    @property
    def total(self) -> float:
        return float(self.taps.sum())


@dataclass(frozen=True)
class NoiseModel:
    """Constant-rate external interference, molecules per sample."""

    lambda_s: float = 0.0

    def __post_init__(self):
        if self.lambda_s < 0:
            raise ValueError(f"noise rate must be nonnegative, got {self.lambda_s}")


@dataclass(frozen=True)
class PowerBudget:
    """Average emitted molecules per information bit."""

    molecules_per_bit: float

    def __post_init__(self):
        if not self.molecules_per_bit > 0:
            raise ValueError("molecules per bit must be positive")


@dataclass(frozen=True)
class EmissionSchedule:
    """Per-sample, per-channel emitted molecule counts.

    channels is a (num_channels, block_symbols * n) array; entries are
    nonnegative reals (molecule counts released at each sample instant).
    """

    channels: np.ndarray
    block_symbols: int

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if np.any(arr < 0):
            raise ValueError("emission schedule entries must be nonnegative")
        if self.block_symbols < 1 or arr.shape[1] % self.block_symbols:
            raise ValueError(
                f"schedule length {arr.shape[1]} not divisible by "
                f"block length {self.block_symbols}"
            )
        object.__setattr__(self, "channels", _frozen_array(arr))

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def samples_per_symbol(self) -> int:
        return self.channels.shape[1] // self.block_symbols


@dataclass(frozen=True)
class SampleSeries:
    """Per-sample, per-channel arrival counts observed at the receiver.

    Poisson synthesis yields nonnegative integers; the Gaussian
    approximation yields reals.
    """

    channels: np.ndarray
    block_symbols: int

    def __post_init__(self):
        # Keep the caller's dtype: integer counts for Poisson synthesis,
        # reals for the Gaussian approximation.
        arr = np.array(np.atleast_2d(self.channels), copy=True)
        if self.block_symbols < 1 or arr.shape[1] % self.block_symbols:
            raise ValueError(
                f"series length {arr.shape[1]} not divisible by "
                f"block length {self.block_symbols}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "channels", arr)

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def samples_per_symbol(self) -> int:
        return self.channels.shape[1] // self.block_symbols
