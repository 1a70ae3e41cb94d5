"""Detector zoo for the Poisson molecular link.

Covers fixed and adaptive thresholding, likelihood-based adaptive
thresholding with decision feedback, Viterbi sequence detection, the
max-sample asynchronous detectors, a truncated sequential probability
ratio test, maximum-count demodulation for type/position/antenna schemes,
and the two-stage concentration-plus-position detector.

Every detector is a pure function of its inputs: predict() cold-starts
any feedback state, so identical series give identical decisions.
Strict ">" comparisons throughout; ties resolve to bit 0 / lowest index.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_series, check_single_channel
from .equalization import derivative_apply, symbol_isi_taps
from .modulation import (
    SchemeDescriptor,
    bits_per_symbol,
    gmosk_patterns,
    maaf_frame_map,
    symbols_to_bits,
)
from .types import TapVector

# Floor inside logarithms so zero-noise channels stay well defined.
LOG_FLOOR = 1e-12


def _taps_array(taps) -> np.ndarray:
    return np.asarray(taps.taps if isinstance(taps, TapVector) else taps, dtype=float)


def optimal_threshold(molecules_per_bit: float, first_tap: float, lambda_s: float) -> float:
    """Likelihood crossing point of the two no-ISI hypotheses.

    gamma = 2*M*h1 / ln((2*M*h1 + lambda_s) / lambda_s); at this value the
    Poisson log-likelihoods of the on and off hypotheses are equal.  For
    lambda_s = 0 the crossing degenerates to "any arrival means one"; a
    threshold strictly between 0 and the smallest positive count is
    returned in that case.
    """
    signal = 2.0 * molecules_per_bit * first_tap
    if signal <= 0:
        raise ValueError("signal level 2*M*h1 must be positive")
    if lambda_s <= 0:
        return min(0.5, signal / 2.0)
    return signal / math.log((signal + lambda_s) / lambda_s)


class _IsiTracker:
    """Decision-feedback ISI estimate shared by the coherent detectors.

    Keeps the fed-back emission magnitudes of up to `memory_limit`
    previous symbols (cold start: all zero) and projects them onto the
    current symbol's samples through the tap vector.
    """

    def __init__(self, taps: np.ndarray, n: int, memory_limit: Optional[int] = None):
        weights = symbol_isi_taps(taps, n)
        depth = weights.shape[1]
        if memory_limit is not None:
            if memory_limit < 0:
                raise ValueError("feedback memory must be >= 0")
            depth = min(depth, memory_limit)
        self._weights = weights[:, :depth]
        self._history = np.zeros(depth)

    def expected(self) -> np.ndarray:
        if self._history.size == 0:
            return np.zeros(self._weights.shape[0])
        return self._weights @ self._history

    def push(self, emission: float) -> None:
        if self._history.size == 0:
            return
        self._history[1:] = self._history[:-1]
        self._history[0] = emission


class FixedThresholdDetector(BaseEstimator):
    """Fixed threshold on the total count collected over each symbol."""

    def __init__(self, gamma: float, n: int = 1):
        self.gamma = gamma
        self.n = n

    def predict(self, y) -> np.ndarray:
        series = check_single_channel(y, self.n)
        sums = series.reshape(-1, self.n).sum(axis=1)
        return (sums > self.gamma).astype(np.uint8)


class AdaptiveThresholdDetector(BaseEstimator):
    """Compares each symbol's count with the previous symbol's count.

    The first symbol has no predecessor and falls back to a fixed gamma.
    """

    def __init__(self, gamma: float, n: int = 1):
        self.gamma = gamma
        self.n = n

    def predict(self, y) -> np.ndarray:
        series = check_single_channel(y, self.n)
        sums = series.reshape(-1, self.n).sum(axis=1)
        bits = np.empty(sums.size, dtype=np.uint8)
        bits[0] = sums[0] > self.gamma
        bits[1:] = sums[1:] > sums[:-1]
        return bits


class MaxSampleDetector(BaseEstimator):
    """Asynchronous detector: the largest sample in the symbol against a
    fixed threshold.  drop_last discards trailing samples of each symbol
    (used after derivative pre-processing to skip non-causal leakage)."""

    def __init__(self, gamma: float, n: int = 1, drop_last: int = 0):
        self.gamma = gamma
        self.n = n
        self.drop_last = drop_last

    def predict(self, y) -> np.ndarray:
        if not 0 <= self.drop_last < self.n:
            raise ValueError(
                f"drop_last must satisfy 0 <= drop_last < n, got {self.drop_last} (n={self.n})"
            )
        series = check_single_channel(y, self.n)
        keep = self.n - self.drop_last
        peaks = series.reshape(-1, self.n)[:, :keep].max(axis=1)
        return (peaks > self.gamma).astype(np.uint8)


class DerivativeMaxDetector(BaseEstimator):
    """m-th order forward difference followed by max-sample thresholding,
    discarding the last m samples of each symbol.  order=0 is the plain
    max-sample detector."""

    def __init__(self, gamma: float, n: int = 1, order: int = 0):
        self.gamma = gamma
        self.n = n
        self.order = order

    def predict(self, y) -> np.ndarray:
        if not 0 <= self.order < self.n:
            raise ValueError(f"derivative order must satisfy 0 <= m < n, got {self.order}")
        series = check_single_channel(y, self.n)
        transformed = derivative_apply(series, self.order)
        return MaxSampleDetector(self.gamma, self.n, drop_last=self.order).predict(transformed)


class FeedbackMaxDetector(BaseEstimator):
    """Max-sample detector with decision-feedback ISI subtraction.

    The expected interference on every sample, reconstructed from the
    last feedback_memory decisions and the tap vector, is removed before
    taking the maximum.  Corrected samples may go negative; no clamping.
    """

    def __init__(
        self,
        gamma: float,
        taps,
        on_level: float,
        n: int = 1,
        feedback_memory: Optional[int] = None,
    ):
        self.gamma = gamma
        self.taps = taps
        self.on_level = on_level
        self.n = n
        self.feedback_memory = feedback_memory

    def predict(self, y) -> np.ndarray:
        series = check_single_channel(y, self.n)
        tracker = _IsiTracker(_taps_array(self.taps), self.n, self.feedback_memory)
        frames = series.reshape(-1, self.n)
        bits = np.empty(frames.shape[0], dtype=np.uint8)
        for k in range(frames.shape[0]):
            corrected = frames[k] - tracker.expected()
            bit = corrected.max() > self.gamma
            bits[k] = bit
            tracker.push(self.on_level if bit else 0.0)
        return bits


class DecisionAidedDetector(BaseEstimator):
    """Symbol-by-symbol maximum-likelihood threshold with decision feedback.

    Given channel state information, each symbol is decided by the Poisson
    log-likelihood ratio with hypothesis means built from the first-symbol
    taps, the estimated interference of the last feedback_memory decisions
    and the noise floor:

        sum_q y_q * ln((on*h_q + isi_q + lambda_s)/(isi_q + lambda_s))
            >  on * sum_q h_q           ->  bit 1

    For one sample per symbol this is the classical adaptive threshold
    gamma_k = on*h1 / ln((on*h1 + isi + lambda_s)/(isi + lambda_s)).
    isi_override substitutes known interference means (genie mode).
    """

    def __init__(
        self,
        taps,
        lambda_s: float,
        on_level: float,
        n: int = 1,
        feedback_memory: Optional[int] = None,
        isi_override: Optional[np.ndarray] = None,
    ):
        self.taps = taps
        self.lambda_s = lambda_s
        self.on_level = on_level
        self.n = n
        self.feedback_memory = feedback_memory
        self.isi_override = isi_override

    def predict(self, y) -> np.ndarray:
        series = check_single_channel(y, self.n)
        taps = _taps_array(self.taps)
        tracker = _IsiTracker(taps, self.n, self.feedback_memory)
        signal = self.on_level * taps[: self.n]
        threshold = signal.sum()
        frames = series.reshape(-1, self.n)
        override = None
        if self.isi_override is not None:
            override = np.asarray(self.isi_override, dtype=float).reshape(frames.shape)
        bits = np.empty(frames.shape[0], dtype=np.uint8)
        for k in range(frames.shape[0]):
            isi = override[k] if override is not None else tracker.expected()
            floor = np.maximum(isi + self.lambda_s, LOG_FLOOR)
            stat = frames[k] @ np.log((signal + floor) / floor)
            bit = stat > threshold
            bits[k] = bit
            tracker.push(self.on_level if bit else 0.0)
        return bits


class SequentialThresholdDetector(BaseEstimator):
    """Truncated sequential probability ratio test per symbol.

    Samples of a symbol are weighed one at a time through the Poisson
    likelihood ratio of the two hypotheses (means as in the decision-aided
    detector).  The test accepts bit 0 once the ratio drops to
    (1-p_d)/(1-p_fa), accepts bit 1 once it reaches p_d/p_fa, and if still
    undecided after the last sample falls back to the minimum distance
    between the collected counts and the two hypothesis mean vectors,
    measured per sample in units of the hypothesis variance (for Poisson
    counts the variance equals the mean, so plain Euclidean distance would
    overweight high-mean samples).

    decision_samples_ records how many samples each symbol consumed.
    """

    def __init__(
        self,
        p_d: float,
        p_fa: float,
        taps,
        lambda_s: float,
        on_level: float,
        n: int = 1,
        feedback_memory: Optional[int] = None,
    ):
        self.p_d = p_d
        self.p_fa = p_fa
        self.taps = taps
        self.lambda_s = lambda_s
        self.on_level = on_level
        self.n = n
        self.feedback_memory = feedback_memory

    def predict(self, y) -> np.ndarray:
        if not 0.0 < self.p_fa < self.p_d < 1.0:
            raise ValueError(
                f"need 0 < p_fa < p_d < 1, got p_fa={self.p_fa}, p_d={self.p_d}"
            )
        log_a = math.log((1.0 - self.p_d) / (1.0 - self.p_fa))
        log_b = math.log(self.p_d / self.p_fa)
        series = check_single_channel(y, self.n)
        taps = _taps_array(self.taps)
        tracker = _IsiTracker(taps, self.n, self.feedback_memory)
        signal = self.on_level * taps[: self.n]
        frames = series.reshape(-1, self.n)
        bits = np.empty(frames.shape[0], dtype=np.uint8)
        used = np.empty(frames.shape[0], dtype=np.int64)
        for k in range(frames.shape[0]):
            mu0 = np.maximum(tracker.expected() + self.lambda_s, LOG_FLOOR)
            mu1 = signal + mu0
            llr = np.cumsum(frames[k] * np.log(mu1 / mu0) - signal)
            zeros = np.nonzero(llr <= log_a)[0]
            ones = np.nonzero(llr >= log_b)[0]
            t0 = zeros[0] if zeros.size else self.n
            t1 = ones[0] if ones.size else self.n
            if t0 < t1:
                bit, took = 0, t0 + 1
            elif t1 < t0:
                bit, took = 1, t1 + 1
            else:  # undecided through the last sample: minimum distance
                dev0 = frames[k] - mu0
                dev1 = frames[k] - mu1
                d0 = np.sum(dev0 * dev0 / mu0)
                d1 = np.sum(dev1 * dev1 / mu1)
                bit, took = int(d1 < d0), self.n
            bits[k] = bit
            used[k] = took
            tracker.push(self.on_level if bit else 0.0)
        self.decision_samples_ = used
        return bits


class SequenceDetector(BaseEstimator):
    """Viterbi maximum-likelihood sequence detection on the Poisson metric.

    The trellis has 2^(band-1) states over the last band-1 symbols; with
    band equal to the channel memory the search is exact.  A smaller band
    truncates the taps (banded approximation).  Metric ties are broken
    toward the lexicographically smaller bit sequence, which the per-state
    survivor prefixes make exact.
    """

    def __init__(
        self,
        taps,
        lambda_s: float,
        on_level: float,
        n: int = 1,
        band: Optional[int] = None,
    ):
        self.taps = taps
        self.lambda_s = lambda_s
        self.on_level = on_level
        self.n = n
        self.band = band

    def _pattern_table(self, band: int):
        """Mean vector for every combination of the last `band` symbols.

        Combo bit j holds the symbol transmitted j symbols before the
        current one (bit 0 = current)."""
        taps = _taps_array(self.taps)[: band * self.n]
        combos = np.arange(1 << band)
        sel = (combos[:, None] >> np.arange(band)) & 1  # (combos, band)
        per_lag = self.on_level * taps.reshape(band, self.n)
        means = sel @ per_lag + self.lambda_s  # (combos, n)
        log_means = np.log(np.maximum(means, LOG_FLOOR))
        return log_means, means.sum(axis=1)

    def predict(self, y) -> np.ndarray:
        series = check_single_channel(y, self.n)
        taps = _taps_array(self.taps)
        memory = taps.size // self.n
        band = memory if self.band is None else self.band
        if not 1 <= band <= memory:
            raise ValueError(f"band must be in [1, {memory}], got {band}")
        frames = series.reshape(-1, self.n)
        log_means, mean_sums = self._pattern_table(band)

        if band == 1:
            # Memoryless metric: symbol-wise likelihood comparison.
            stat = frames @ (log_means[1] - log_means[0]) - (mean_sums[1] - mean_sums[0])
            return (stat > 0).astype(np.uint8)

        states = 1 << (band - 1)
        state_ids = np.arange(states)
        pred0 = state_ids >> 1
        pred1 = pred0 | (states >> 1)
        u = state_ids & 1
        combo0 = (pred0 << 1) | u
        combo1 = (pred1 << 1) | u
        metric = np.full(states, -np.inf)
        metric[0] = 0.0
        prefixes = [b""] * states
        u_bytes = [bytes([int(b)]) for b in u]

        for k in range(frames.shape[0]):
            bm = log_means @ frames[k] - mean_sums
            cand0 = metric[pred0] + bm[combo0]
            cand1 = metric[pred1] + bm[combo1]
            take1 = cand1 > cand0
            ties = np.nonzero(cand1 == cand0)[0]
            for s in ties:
                if np.isfinite(cand0[s]) and prefixes[pred1[s]] < prefixes[pred0[s]]:
                    take1[s] = True
            new_metric = np.where(take1, cand1, cand0)
            prefixes = [
                prefixes[pred1[s] if take1[s] else pred0[s]] + u_bytes[s]
                for s in range(states)
            ]
            metric = new_metric

        best = 0
        for s in range(1, states):
            if metric[s] > metric[best] or (
                metric[s] == metric[best] and prefixes[s] < prefixes[best]
            ):
                best = s
        return np.frombuffer(prefixes[best], dtype=np.uint8).copy()


def max_count_index(counts) -> int:
    """Index of the largest count; ties resolve to the lowest index."""
    return int(np.argmax(np.asarray(counts)))


class MaxCountDetector(BaseEstimator):
    """argmax demodulator for type, position and antenna keying.

    Aggregates counts per symbol (per channel, per sub-slot, or per
    activation pattern as the scheme dictates) and inverts the scheme's
    symbol map.  Non-coherent: no channel knowledge needed.
    """

    def __init__(self, scheme: SchemeDescriptor, n: int):
        self.scheme = scheme
        self.n = n

    def predict(self, y) -> np.ndarray:
        scheme = self.scheme
        series = check_series(y, self.n)
        b = bits_per_symbol(scheme)
        kind = scheme.kind
        if kind == "ppm":
            frames = check_single_channel(y, self.n).reshape(-1, scheme.k, self.n // scheme.k)
            slots = frames.sum(axis=2)
            return symbols_to_bits(np.argmax(slots, axis=1), b)
        if kind in ("mosk", "mssk"):
            per_symbol = series.reshape(series.shape[0], -1, self.n).sum(axis=2)
            return symbols_to_bits(np.argmax(per_symbol, axis=0), b)
        if kind == "gmosk":
            per_symbol = series.reshape(series.shape[0], -1, self.n).sum(axis=2)
            patterns = np.array(gmosk_patterns(scheme.k, scheme.k_active)[: 1 << b])
            scores = per_symbol[patterns].sum(axis=1)  # (patterns, symbols)
            return symbols_to_bits(np.argmax(scores, axis=0), b)
        if kind == "maaf":
            layout = maaf_frame_map(scheme.k, scheme.b_info)
            per_symbol = series.reshape(series.shape[0], -1, self.n).sum(axis=2)
            s = per_symbol.shape[1]
            out = np.empty((s, layout.n_streams, layout.b_info), dtype=np.uint8)
            for stream in range(layout.n_streams):
                lo = layout.channel_index(stream, 0)
                group = per_symbol[lo : lo + layout.symbols_per_stream]
                v = np.argmax(group, axis=0)
                out[:, stream, :] = symbols_to_bits(v, layout.b_info).reshape(s, layout.b_info)
            return out.reshape(-1)
        raise ValueError(f"max-count detection does not apply to scheme {kind!r}")


class TwoStageDetector(BaseEstimator):
    """Position-then-concentration detector for joint keying.

    Stage 1 picks the sub-slot with the largest count (position bits);
    stage 2 thresholds the winning sub-slot's count for the concentration
    bit."""

    def __init__(self, scheme: SchemeDescriptor, gamma: float, n: int):
        self.scheme = scheme
        self.gamma = gamma
        self.n = n

    def predict(self, y) -> np.ndarray:
        scheme = self.scheme
        if scheme.kind != "mcpm":
            raise ValueError("two-stage detection applies to mcpm schemes only")
        b = bits_per_symbol(scheme)
        frames = check_single_channel(y, self.n).reshape(-1, scheme.k, self.n // scheme.k)
        slots = frames.sum(axis=2)
        pos = np.argmax(slots, axis=1)
        winner = slots[np.arange(slots.shape[0]), pos]
        out = np.empty((slots.shape[0], b), dtype=np.uint8)
        out[:, 0] = winner > self.gamma
        out[:, 1:] = symbols_to_bits(pos, b - 1).reshape(-1, b - 1)
        return out.reshape(-1)


class DualStreamThresholdDetector(BaseEstimator):
    """Per-stream threshold detection for two interleaved on-off streams.

    Stream A occupies even bit positions, stream B (offset by half the
    frame) the odd ones.  full_window counts the whole doubled symbol
    duration; otherwise only the first half after each release is counted
    (the difference between the two dual-stream schemes).
    """

    def __init__(self, gamma: float, n: int, full_window: bool = True):
        self.gamma = gamma
        self.n = n
        self.full_window = full_window

    def predict(self, y) -> np.ndarray:
        series = check_series(y, self.n)
        if series.shape[0] != 2:
            raise ValueError(f"dual-stream detection needs 2 channels, got {series.shape[0]}")
        if self.n % 2:
            raise ValueError(f"dual-stream frames need an even n, got {self.n}")
        half = self.n // 2
        width = self.n if self.full_window else half
        total = series.shape[1]
        s = total // self.n
        bits = np.empty(2 * s, dtype=np.uint8)
        for k in range(s):
            a_stop = min(k * self.n + width, total)
            b_start = k * self.n + half
            b_stop = min(b_start + width, total)
            bits[2 * k] = series[0, k * self.n : a_stop].sum() > self.gamma
            bits[2 * k + 1] = series[1, b_start:b_stop].sum() > self.gamma
        return bits


def matched_detector(
    scheme: SchemeDescriptor,
    n: int,
    gamma: float = 0.0,
) -> BaseEstimator:
    """Low-complexity demodulator conventionally paired with each scheme."""
    kind = scheme.kind
    if kind == "bcsk":
        return FixedThresholdDetector(gamma, n)
    if kind in ("ppm", "mosk", "mssk", "gmosk", "maaf"):
        return MaxCountDetector(scheme, n)
    if kind == "mcpm":
        return TwoStageDetector(scheme, gamma, n)
    if kind in ("dmosk", "mcsk"):
        return DualStreamThresholdDetector(gamma, n, full_window=(kind == "dmosk"))
    raise ValueError(f"no matched detector for scheme {kind!r}")
