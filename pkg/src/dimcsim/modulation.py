"""Bit-stream to emission-schedule mapping for every supported scheme.

All schemes are normalized to the same information rate and the same
average transmission power: a scheme carrying B bits per symbol uses a
symbol duration of B*t_b seconds and emits an average of B*M molecules
per symbol (M molecules per information bit) under equiprobable bits.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_bits
from .types import EmissionSchedule, PowerBudget, SamplingGrid

SCHEME_KINDS = (
    "bcsk",
    "ppm",
    "mcpm",
    "mosk",
    "dmosk",
    "mcsk",
    "gmosk",
    "maaf",
    "mssk",
)

# Schemes that signal with the emission time inside the symbol; their
# receivers integrate per sub-slot, so the grid carries n samples per slot.
_SLOTTED = ("ppm", "mcpm")
# Two parallel on-off streams at doubled symbol duration, offset by t_b.
_DUAL_STREAM = ("dmosk", "mcsk")


def _require_power_of_two(k: int, what: str) -> int:
    if k < 2 or k & (k - 1):
        raise ValueError(f"{what} must be a power of two >= 2, got {k}")
    return int(math.log2(k))


@dataclass(frozen=True)
class SchemeDescriptor:
    """Which scheme to run and its order parameters.

    k is the modulation order (slots, molecule types or antennas),
    k_active the number of simultaneously activated types (gmosk),
    b_info the information bits per frame (maaf), alpha the concentration
    split of mcpm, and num_channels the antenna count for mssk.
    """

    kind: str
    k: int = 2
    k_active: int = 1
    b_info: int = 1
    alpha: float = 0.75
    num_channels: int = 0

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind in ("ppm", "mcpm", "mosk", "maaf", "gmosk") and self.k < 2:
            raise ValueError(f"{self.kind} needs k >= 2, got {self.k}")
        if self.kind == "mcpm" and not 0.5 < self.alpha < 1.0:
            raise ValueError(f"mcpm requires alpha in (0.5, 1), got {self.alpha}")
        if self.kind == "gmosk" and not 1 <= self.k_active < self.k:
            raise ValueError(
                f"gmosk requires 1 <= k_active < k, got k_active={self.k_active}, k={self.k}"
            )
        if self.kind == "maaf":
            frame = int(math.floor(math.log2(self.k)))
            if not 1 <= self.b_info <= frame:
                raise ValueError(
                    f"maaf requires 1 <= b_info <= floor(log2 k) = {frame}, got {self.b_info}"
                )
        if self.kind == "mssk" and self.num_channels < 2:
            raise ValueError(f"mssk needs num_channels >= 2, got {self.num_channels}")

    @property
    def name(self) -> str:
        if self.kind == "bcsk":
            return "bcsk"
        if self.kind in ("ppm", "mcpm", "mosk"):
            return f"{self.kind}{self.k}"
        if self.kind == "gmosk":
            return f"gmosk{self.k}.{self.k_active}"
        if self.kind == "maaf":
            return f"maaf{self.k}.{self.b_info}"
        if self.kind == "mssk":
            return f"mssk{self.num_channels}"
        return self.kind  # dmosk, mcsk

    @property
    def channels(self) -> int:
        """Number of orthogonal channels (molecule types or antennas)."""
        if self.kind in ("bcsk", "ppm", "mcpm"):
            return 1
        if self.kind in _DUAL_STREAM:
            return 2
        if self.kind == "mssk":
            return self.num_channels
        return self.k

    def samples_per_symbol(self, n: int) -> int:
        """Grid samples per symbol for a base rate of n samples per slot."""
        if self.kind in _SLOTTED:
            return self.k * n
        if self.kind in _DUAL_STREAM:
            return 2 * n
        return n


def bits_per_symbol(scheme: SchemeDescriptor) -> int:
    """Information bits carried by one symbol of the scheme (all parallel
    streams counted together)."""
    kind = scheme.kind
    if kind == "bcsk":
        return 1
    if kind == "ppm":
        return _require_power_of_two(scheme.k, "ppm order k")
    if kind == "mcpm":
        return 1 + _require_power_of_two(scheme.k, "mcpm order k")
    if kind == "mosk":
        return _require_power_of_two(scheme.k, "mosk order k")
    if kind in _DUAL_STREAM:
        return 2
    if kind == "gmosk":
        b = int(math.floor(math.log2(math.comb(scheme.k, scheme.k_active))))
        if b < 1:
            raise ValueError(
                f"gmosk(k={scheme.k}, k_active={scheme.k_active}) carries no bits"
            )
        return b
    if kind == "maaf":
        layout = maaf_frame_map(scheme.k, scheme.b_info)
        return layout.n_streams * layout.b_info
    if kind == "mssk":
        b = int(math.floor(math.log2(scheme.num_channels)))
        if b < 1:
            raise ValueError("mssk needs at least 2 antennas")
        return b
    raise ValueError(f"unknown scheme kind {kind!r}")


def grid_for_scheme(
    scheme: SchemeDescriptor,
    t_b: float,
    n: int,
    memory: int,
    tau: float = 0.0,
) -> SamplingGrid:
    """Sampling grid satisfying the bit duration constraint t_sym = B*t_b."""
    b = bits_per_symbol(scheme)
    return SamplingGrid(b * t_b, scheme.samples_per_symbol(n), memory, tau)


@dataclass(frozen=True)
class MaafLayout:
    """Split of a molecule-family frame into information and stream bits."""

    b_info: int
    b_stream: int

    @property
    def n_streams(self) -> int:
        return 1 << self.b_stream

    @property
    def symbols_per_stream(self) -> int:
        return 1 << self.b_info

    def channel_index(self, stream: int, symbol: int) -> int:
        """Molecule type used when a stream transmits a symbol value."""
        return stream * self.symbols_per_stream + symbol


def maaf_frame_map(k: int, b_info: int) -> MaafLayout:
    """Partition floor(log2 k) frame bits into b_info information bits and
    b_stream = floor(log2 k) - b_info parallel-stream index bits."""
    frame_bits = int(math.floor(math.log2(k)))
    if not 1 <= b_info <= frame_bits:
        raise ValueError(
            f"b_info must be in [1, floor(log2 k)] = [1, {frame_bits}], got {b_info}"
        )
    return MaafLayout(b_info, frame_bits - b_info)


def gmosk_patterns(k: int, k_active: int) -> list:
    """Activation patterns in lexicographic order; the first 2^B encode
    symbols, so the map is injective and every pattern activates exactly
    k_active channels."""
    return list(itertools.combinations(range(k), k_active))


def bits_to_symbols(bits: np.ndarray, width: int) -> np.ndarray:
    """Pack consecutive width-bit groups, MSB first."""
    groups = bits.reshape(-1, width)
    weights = 1 << np.arange(width - 1, -1, -1)
    return groups @ weights


def symbols_to_bits(symbols: np.ndarray, width: int) -> np.ndarray:
    """Inverse of bits_to_symbols."""
    shifts = np.arange(width - 1, -1, -1)
    return ((symbols[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


class Modulator(BaseEstimator):
    """Maps a bit stream onto an emission schedule for one scheme.

    Stateless transformer: transform(bits) returns the schedule for a
    block whose symbol count is len(bits) / bits_per_symbol.
    """

    def __init__(self, scheme: SchemeDescriptor, budget: PowerBudget, grid: SamplingGrid):
        self.scheme = scheme
        self.budget = budget
        self.grid = grid

    def fit(self, X=None, y=None):
        return self

    def transform(self, bits) -> EmissionSchedule:
        return modulate(bits, self.scheme, self.budget, self.grid)


def modulate(
    bits,
    scheme: SchemeDescriptor,
    budget: PowerBudget,
    grid: SamplingGrid,
) -> EmissionSchedule:
    """Build the per-channel emission schedule for a block of bits.

    Emissions are impulsive at sub-slot starts.  len(bits) must be a
    multiple of the scheme's bits per symbol.
    """
    bits = check_bits(bits)
    b = bits_per_symbol(scheme)
    if bits.size == 0 or bits.size % b:
        raise ValueError(
            f"bit count {bits.size} is not a positive multiple of {b} "
            f"({scheme.name} bits per symbol)"
        )
    s = bits.size // b
    n = grid.n
    m = budget.molecules_per_bit
    kind = scheme.kind
    x = np.zeros((scheme.channels, s * n))
    starts = np.arange(s) * n

    if kind == "bcsk":
        x[0, starts] = 2.0 * m * bits
    elif kind == "ppm":
        if n % scheme.k:
            raise ValueError(f"grid n={n} not divisible into {scheme.k} sub-slots")
        slot_len = n // scheme.k
        v = bits_to_symbols(bits, b)
        x[0, starts + v * slot_len] = b * m
    elif kind == "mcpm":
        if n % scheme.k:
            raise ValueError(f"grid n={n} not divisible into {scheme.k} sub-slots")
        slot_len = n // scheme.k
        groups = bits.reshape(s, b)
        conc = groups[:, 0]
        v = bits_to_symbols(groups[:, 1:].reshape(-1), b - 1)
        level = np.where(conc == 1, 2.0 * b * m * scheme.alpha, 2.0 * b * m * (1.0 - scheme.alpha))
        x[0, starts + v * slot_len] = level
    elif kind in ("mosk", "mssk"):
        v = bits_to_symbols(bits, b)
        x[v, starts] = b * m
    elif kind in _DUAL_STREAM:
        if n % 2:
            raise ValueError(f"dual-stream schemes need an even grid n, got {n}")
        half = n // 2
        groups = bits.reshape(s, 2)
        x[0, starts] = 2.0 * m * groups[:, 0]
        x[1, starts + half] = 2.0 * m * groups[:, 1]
    elif kind == "gmosk":
        patterns = np.array(gmosk_patterns(scheme.k, scheme.k_active)[: 1 << b])
        v = bits_to_symbols(bits, b)
        active = patterns[v]  # (s, k_active) channel indices
        level = b * m / scheme.k_active
        for j in range(scheme.k_active):
            x[active[:, j], starts] = level
    elif kind == "maaf":
        layout = maaf_frame_map(scheme.k, scheme.b_info)
        groups = bits.reshape(s, layout.n_streams, layout.b_info)
        weights = 1 << np.arange(layout.b_info - 1, -1, -1)
        level = layout.b_info * m
        for stream in range(layout.n_streams):
            v = groups[:, stream, :] @ weights
            x[layout.channel_index(stream, 0) + v, starts] = level
    else:  # pragma: no cover - guarded by SchemeDescriptor
        raise ValueError(f"unknown scheme kind {kind!r}")

    return EmissionSchedule(x, s)
