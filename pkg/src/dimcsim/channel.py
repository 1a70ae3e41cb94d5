"""First-hitting statistics and arrival synthesis for the LTI-Poisson link.

A point transmitter releases molecules that diffuse freely until they are
absorbed by a spherical receiver.  The per-sample hit probabilities form a
tap vector; emissions convolved with the taps give the per-sample Poisson
arrival means, on top of a constant external noise floor.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import erfc

from .types import (
    ChannelGeometry,
    EmissionSchedule,
    NoiseModel,
    SampleSeries,
    SamplingGrid,
    TapVector,
)

SeedLike = Union[int, Sequence[int], np.random.SeedSequence, np.random.Generator]


def first_hit_density(t, geom: ChannelGeometry):
    """First-passage time density for a point source and absorbing sphere.

    f(t) = (r_r/r0) * (r0-r_r)/sqrt(4*pi*D*t^3) * exp(-(r0-r_r)^2/(4*D*t)),
    the classical 3-D result; integrates to r_r/r0 over t in (0, inf).

    Accepts scalars or arrays; every entry must be strictly positive.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("first_hit_density requires t > 0")
    gap = geom.r0 - geom.r_r
    d4 = 4.0 * geom.diff_coef
    out = (
        geom.total_hit_probability
        * gap
        / np.sqrt(np.pi * d4 * t_arr**3)
        * np.exp(-(gap**2) / (d4 * t_arr))
    )
    return out if out.ndim else float(out)


def cumulative_hit(t, geom: ChannelGeometry):
    """Probability that a molecule has been absorbed by time t.

    Closed form (r_r/r0) * erfc((r0-r_r)/sqrt(4*D*t)); 0 at t = 0 and
    monotone nondecreasing with limit r_r/r0.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("cumulative_hit requires t >= 0")
    gap = geom.r0 - geom.r_r
    d4 = 4.0 * geom.diff_coef
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    out[pos] = geom.total_hit_probability * erfc(gap / np.sqrt(d4 * t_arr[pos]))
    return out if out.ndim else float(out)


def build_taps(geom: ChannelGeometry, grid: SamplingGrid) -> TapVector:
    """Integrate the hit density over each sampling interval.

    h[k] = F(k*ts + tau) - F((k-1)*ts + tau) for k = 1..memory*n, with
    negative shifted times clamped to zero so a leading receiver (tau < 0)
    simply sees a delayed response.
    """
    edges = np.arange(grid.num_taps + 1, dtype=float) * grid.t_sample + grid.tau
    np.clip(edges, 0.0, None, out=edges)
    cdf = cumulative_hit(edges, geom)
    return TapVector(np.diff(cdf))


def _channel_rng(seed: SeedLike, channel: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        # A live generator is consumed sequentially across channels.
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed.spawn(channel + 1)[channel])
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng([int(seed), channel])
    return np.random.default_rng([*[int(s) for s in seed], channel])


def arrival_means(x: EmissionSchedule, h: TapVector, noise: NoiseModel) -> np.ndarray:
    """Per-sample Poisson means: causal convolution of emissions with taps
    plus the constant noise floor."""
    n_samples = x.channels.shape[1]
    means = np.empty_like(x.channels)
    for c in range(x.num_channels):
        means[c] = np.convolve(x.channels[c], h.taps)[:n_samples]
    return means + noise.lambda_s


def simulate_arrivals(
    x: EmissionSchedule,
    h: TapVector,
    noise: NoiseModel,
    seed: SeedLike,
) -> SampleSeries:
    """Draw exact Poisson arrival counts, independently per sample and
    per channel.  Deterministic for a fixed seed."""
    means = arrival_means(x, h, noise)
    counts = np.empty(means.shape, dtype=np.int64)
    for c in range(means.shape[0]):
        counts[c] = _channel_rng(seed, c).poisson(means[c])
    return SampleSeries(counts, x.block_symbols)


def simulate_arrivals_gaussian(
    x: EmissionSchedule,
    h: TapVector,
    noise: NoiseModel,
    seed: Optional[SeedLike],
) -> SampleSeries:
    """Gaussian approximation with matched first two moments.

    y = H x + lambda_s + eta with eta zero-mean and variance equal to the
    Poisson mean at every sample.  seed=None disables the noise term and
    returns the means exactly.
    """
    means = arrival_means(x, h, noise)
    if seed is None:
        return SampleSeries(means, x.block_symbols)
    samples = np.empty_like(means)
    for c in range(means.shape[0]):
        rng = _channel_rng(seed, c)
        samples[c] = means[c] + rng.standard_normal(means.shape[1]) * np.sqrt(means[c])
    return SampleSeries(samples, x.block_symbols)
