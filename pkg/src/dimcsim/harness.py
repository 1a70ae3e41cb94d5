"""Seeded Monte Carlo BER engine, parameter optimization and sweeps.

Every random draw derives from the master seed through fixed stream
tags, so a (config, seed) pair determines every reported number, blocks
can run in any order, and all links at a sweep point see the same
channel realizations (common random numbers).
"""
from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import estimation
from .channel import build_taps, simulate_arrivals
from .config import ANALYTIC, OPTIMIZE, ExperimentConfig, LinkSpec
from .detection import (
    AdaptiveThresholdDetector,
    DecisionAidedDetector,
    DerivativeMaxDetector,
    DualStreamThresholdDetector,
    FeedbackMaxDetector,
    FixedThresholdDetector,
    MaxCountDetector,
    MaxSampleDetector,
    SequenceDetector,
    SequentialThresholdDetector,
    TwoStageDetector,
    optimal_threshold,
)
from .equalization import ab_combine, ab_preequalize, atract_precode, derivative_apply
from .modulation import SchemeDescriptor, bits_per_symbol, grid_for_scheme, modulate
from .types import EmissionSchedule, NoiseModel, PowerBudget, SampleSeries, TapVector

# Stream tags separating measurement, optimization and pilot randomness.
_MEAS, _OPT, _PILOT = 0, 1, 2
_Z95 = 1.959963984540054


def snr_to_noise(molecules_per_bit: float, n: int, snr_db: float) -> float:
    """Noise rate per sample from SNR = M / (N * lambda_s)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return molecules_per_bit / (n * 10.0 ** (snr_db / 10.0))


def wilson_interval(errors: int, bits: int, z: float = _Z95) -> Tuple[float, float]:
    """95% binomial confidence interval (Wilson); always contains the
    point estimate errors/bits."""
    if bits <= 0:
        return (0.0, 1.0)
    p = errors / bits
    denom = 1.0 + z * z / bits
    center = (p + z * z / (2 * bits)) / denom
    half = z * math.sqrt(p * (1.0 - p) / bits + z * z / (4.0 * bits * bits)) / denom
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == bits else min(1.0, center + half)
    return (lo, hi)


@dataclass
class BerReport:
    """One Monte Carlo measurement point."""

    sweep_var: str
    sweep_value: float
    scheme: str
    detector: str
    bits: int
    errors: int
    ber: float
    ci_low: float
    ci_high: float
    optimized: Dict[str, float]
    seed: int
    runtime_s: float
    config: ExperimentConfig


@dataclass(frozen=True)
class _Point:
    """Channel and power parameters at one sweep value."""

    molecules_per_bit: float
    t_b: float
    tau: float
    lambda_s: float
    sweep_value: float


def _resolve_point(config: ExperimentConfig, value: float) -> _Point:
    m = config.molecules_per_bit
    t_b = config.t_b
    tau = config.tau
    snr_db = config.snr_db
    axis = config.sweep_axis
    if axis == "m":
        m = value
    elif axis == "tau":
        tau = value
    elif axis == "snr_db":
        snr_db = value
    elif axis == "t_b":
        t_b = value
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    lam = config.lambda_s if config.lambda_s is not None else snr_to_noise(m, config.n, snr_db)
    return _Point(m, t_b, tau, lam, value)


def _bits_rng(seed: int, phase: int, block: int) -> np.random.Generator:
    return np.random.default_rng([seed, phase, block, 1 << 20])


def _sim_seed(seed: int, phase: int, block: int) -> list:
    return [seed, phase, block]


@dataclass
class _LinkRuntime:
    """Everything needed to emit, receive and decide for one link."""

    link: LinkSpec
    scheme: SchemeDescriptor
    b: int
    n_sym: int
    taps_channel: TapVector
    taps_tx: TapVector
    detector: object
    optimized: Dict[str, float]
    ab_delay_samples: int = 0
    ab_scale: float = 0.0

    @property
    def sim_key(self) -> tuple:
        return (
            self.scheme,
            self.link.precoder,
            self.ab_delay_samples,
            self.ab_scale,
        )

    def emit(self, bits: np.ndarray, point: _Point, budget: PowerBudget, grid) -> EmissionSchedule:
        if self.link.precoder == "atract":
            return atract_precode(bits, self.taps_tx, self.n_sym, point.molecules_per_bit)
        schedule = modulate(bits, self.scheme, budget, grid)
        if self.link.precoder == "ab":
            return ab_preequalize(schedule, self.ab_delay_samples, self.ab_scale)
        return schedule

    def decide(self, series: SampleSeries) -> np.ndarray:
        if self.link.precoder == "ab":
            return self.detector.predict(ab_combine(series))
        return self.detector.predict(series)


def _make_detector(
    link: LinkSpec,
    scheme: SchemeDescriptor,
    n_sym: int,
    taps_csi,
    lambda_s: float,
    on_level: float,
    gamma: float,
    order: int,
    memory: int,
):
    kind = link.detector
    if scheme.kind in ("dmosk", "mcsk"):
        return DualStreamThresholdDetector(gamma, n_sym, full_window=(scheme.kind == "dmosk"))
    if kind == "ftd":
        return FixedThresholdDetector(gamma, n_sym)
    if kind == "atd":
        return AdaptiveThresholdDetector(gamma, n_sym)
    if kind == "ads":
        return MaxSampleDetector(gamma, n_sym)
    if kind == "dmads":
        return DerivativeMaxDetector(gamma, n_sym, order)
    if kind == "addf":
        return FeedbackMaxDetector(gamma, taps_csi, on_level, n_sym, link.l_prime)
    if kind == "mlda":
        return DecisionAidedDetector(taps_csi, lambda_s, on_level, n_sym, link.l_prime)
    if kind in ("mlsd", "bandedmlsd"):
        band = link.band if kind == "bandedmlsd" else memory
        return SequenceDetector(taps_csi, lambda_s, on_level, n_sym, band)
    if kind == "dfesprt":
        return SequentialThresholdDetector(
            link.p_d, link.p_fa, taps_csi, lambda_s, on_level, n_sym, link.l_prime
        )
    if kind == "mcd":
        return MaxCountDetector(scheme, n_sym)
    if kind == "mcpm2stage":
        return TwoStageDetector(scheme, gamma, n_sym)
    raise ValueError(f"unknown detector kind {kind!r}")


def _needs_gamma(link: LinkSpec) -> bool:
    return link.detector in ("ftd", "atd", "ads", "dmads", "addf", "mcpm2stage")


class _OptEval:
    """Fixed-seed objective for threshold/parameter search on one link.

    Simulates the synchronized channel (tau = 0) once over the optimizer
    block budget and re-detects per candidate, so every candidate sees the
    same noise (common random numbers)."""

    def __init__(
        self,
        config: ExperimentConfig,
        point: _Point,
        link: LinkSpec,
        scheme: SchemeDescriptor,
        order: int,
        ab: Tuple[int, float],
        seed: int,
        taps_csi,
        lambda_s_csi: float,
    ):
        self.config = config
        self.point = point
        self.link = link
        self.scheme = scheme
        self.order = order
        self.n_sym = scheme.samples_per_symbol(config.n)
        self.b = bits_per_symbol(scheme)
        self.taps_csi = taps_csi
        self.lambda_s_csi = lambda_s_csi
        grid = grid_for_scheme(scheme, point.t_b, config.n, config.memory, tau=0.0)
        taps = build_taps(config.geometry, grid)
        noise = NoiseModel(point.lambda_s)
        budget = PowerBudget(point.molecules_per_bit)
        self.tx_bits: List[np.ndarray] = []
        self.series: List = []
        s = config.block_symbols
        for block in range(config.opt_blocks):
            bits = _bits_rng(seed, _OPT, block).integers(0, 2, s * self.b).astype(np.uint8)
            if link.precoder == "atract":
                schedule = atract_precode(bits, taps_csi, self.n_sym, point.molecules_per_bit)
            else:
                schedule = modulate(bits, scheme, budget, grid)
                if link.precoder == "ab":
                    schedule = ab_preequalize(schedule, ab[0], ab[1])
            y = simulate_arrivals(schedule, taps, noise, _sim_seed(seed, _OPT, block))
            if link.precoder == "ab":
                y = ab_combine(y)
            self.tx_bits.append(bits)
            self.series.append(y)

    def errors(self, gamma: float) -> int:
        det = _make_detector(
            self.link,
            self.scheme,
            self.n_sym,
            self.taps_csi,
            self.lambda_s_csi,
            2.0 * self.point.molecules_per_bit,
            gamma,
            self.order,
            self.config.memory,
        )
        total = 0
        for bits, y in zip(self.tx_bits, self.series):
            total += int(np.count_nonzero(det.predict(y) != bits))
        return total

    def gamma_bounds(self) -> Tuple[float, float]:
        """Search range from the per-symbol decision statistic.

        Quantiles rather than extremes: the useful threshold sits between
        the two class-conditional clusters, far inside the raw sample
        range when interference patterns have heavy tails.
        """
        kind = self.link.detector
        stats = []
        for y in self.series:
            arr = y.channels if isinstance(y, SampleSeries) else y
            arr = np.asarray(arr, dtype=float)
            if kind in ("ftd", "atd"):
                stats.append(arr.reshape(arr.shape[0], -1, self.n_sym).sum(axis=2))
            elif kind == "mcpm2stage":
                slot = self.n_sym // self.scheme.k
                slot_sums = arr.reshape(arr.shape[0], -1, self.scheme.k, slot).sum(axis=3)
                stats.append(slot_sums.max(axis=2))
            elif kind == "dmads":
                diffed = derivative_apply(arr, self.order)
                keep = self.n_sym - self.order
                frames = diffed.reshape(arr.shape[0], -1, self.n_sym)[:, :, :keep]
                stats.append(frames.max(axis=2))
            elif self.scheme.kind in ("dmosk", "mcsk"):
                # Window sums at the per-stream counting length.
                width = self.n_sym if self.scheme.kind == "dmosk" else self.n_sym // 2
                stats.append(arr.reshape(arr.shape[0], -1, width).sum(axis=2))
            else:  # ads, addf: per-symbol peak sample
                stats.append(arr.reshape(arr.shape[0], -1, self.n_sym).max(axis=2))
        flat = np.concatenate([s.ravel() for s in stats])
        q_lo, q_hi = np.quantile(flat, [0.001, 0.999])
        # Feedback subtraction can push the working statistic below the raw
        # range, so extend the floor by one spread.
        lo = min(0.0, q_lo - (q_hi - q_lo))
        return (float(lo), float(q_hi) + 1.0)


def _grid_search(objective: Callable[[float], int], lo: float, hi: float, points: int, rounds: int):
    """Coarse-to-fine threshold search; ties resolve to the middle of the
    tied plateau so zero-error plateaus pick a centred value."""
    best_x, best_err = lo, None
    for _ in range(rounds + 1):
        grid = np.linspace(lo, hi, points)
        errs = [objective(x) for x in grid]
        least = min(errs)
        tied = [i for i, e in enumerate(errs) if e == least]
        pick = tied[len(tied) // 2]
        best_x, best_err = float(grid[pick]), least
        span = grid[1] - grid[0] if points > 1 else (hi - lo)
        lo = max(lo, best_x - span)
        hi = min(hi, best_x + span)
    return best_x, best_err


def _resolve_link(
    config: ExperimentConfig,
    point: _Point,
    link: LinkSpec,
    seed: int,
) -> _LinkRuntime:
    """Fix every free parameter of a link at one sweep point.

    Detectors are configured for a synchronized receiver: their channel
    knowledge and any numerical optimization use tau = 0 regardless of the
    true clock lag, which only the simulated channel sees.
    """
    optimized: Dict[str, float] = {}

    # -- scheme (alpha may need a search) --------------------------------
    alpha = link.alpha
    order = link.order
    ab_delay = link.ab_delay
    ab_scale = link.ab_scale

    def scheme_for(a) -> SchemeDescriptor:
        return link.scheme(alpha=a if isinstance(a, float) else None)

    scheme = scheme_for(alpha if isinstance(alpha, float) else None)
    n_sym = scheme.samples_per_symbol(config.n)
    grid_csi = grid_for_scheme(scheme, point.t_b, config.n, config.memory, tau=0.0)
    grid_chan = grid_for_scheme(scheme, point.t_b, config.n, config.memory, tau=point.tau)
    taps_channel = build_taps(config.geometry, grid_chan)
    taps_tx = build_taps(config.geometry, grid_csi)

    # -- receiver channel knowledge --------------------------------------
    lambda_csi = point.lambda_s
    taps_csi = taps_tx
    if link.csi == "estimated":
        taps_csi, lambda_csi = estimation.pilot_channel_estimate(
            geometry=config.geometry,
            grid=grid_csi,
            molecules_per_bit=point.molecules_per_bit,
            lambda_s=point.lambda_s,
            pilot_symbols=link.pilot_symbols,
            seed=[seed, _PILOT],
        )

    on_level = 2.0 * point.molecules_per_bit

    def make_eval(a=None, m_order=0, ab=(0, 0.0)):
        return _OptEval(
            config,
            point,
            link,
            scheme_for(a) if a is not None else scheme,
            m_order,
            ab,
            seed,
            taps_csi,
            lambda_csi,
        )

    gamma: float = 0.0
    search_pts = config.opt_grid_points
    rounds = config.opt_refine_rounds

    def best_gamma(ev: _OptEval):
        """Resolve gamma for one candidate configuration: honor a fixed
        value, else grid-search the optimizer objective."""
        if isinstance(link.gamma, float):
            return float(link.gamma), ev.errors(float(link.gamma))
        lo, hi = ev.gamma_bounds()
        return _grid_search(ev.errors, lo, hi, search_pts, rounds)

    if link.precoder == "ab":
        if isinstance(ab_delay, float):
            delays = [max(1, round(ab_delay / grid_csi.t_sample))]
        else:
            delays = list(range(1, min(8, len(taps_csi)) + 1))
        scales = [float(ab_scale)] if isinstance(ab_scale, float) else [0.2, 0.35, 0.5, 0.65, 0.8]
        best = None
        for d in delays:
            for sc in scales:
                ev = make_eval(ab=(d, sc))
                g, err = best_gamma(ev)
                if best is None or err < best[0]:
                    best = (err, d, sc, g)
        _, d, sc, gamma = best
        ab_delay_samples, ab_scale_val = d, sc
        if not isinstance(link.ab_delay, float):
            optimized["ab_delay"] = d * grid_csi.t_sample
        if not isinstance(link.ab_scale, float):
            optimized["ab_scale"] = sc
        optimized["gamma"] = gamma
    else:
        ab_delay_samples, ab_scale_val = 0, 0.0
        if alpha == OPTIMIZE:
            coarse = np.linspace(0.55, 0.95, 9)
            best = None
            for a in coarse:
                ev = make_eval(a=float(a))
                g, err = best_gamma(ev)
                if best is None or err < best[0]:
                    best = (err, float(a), g)
            _, a_best, gamma = best
            fine = np.linspace(max(0.51, a_best - 0.04), min(0.99, a_best + 0.04), 5)
            for a in fine:
                ev = make_eval(a=float(a))
                g, err = best_gamma(ev)
                if err < best[0]:
                    best = (err, float(a), g)
            _, a_best, gamma = best
            scheme = scheme_for(a_best)
            optimized["alpha"] = a_best
            if link.gamma == OPTIMIZE:
                optimized["gamma"] = gamma
        elif order == OPTIMIZE:
            best = None
            for m in range(0, min(4, n_sym - 1) + 1):
                ev = make_eval(m_order=m)
                g, err = best_gamma(ev)
                if best is None or err < best[0]:
                    best = (err, m, g)
            _, order, gamma = best
            optimized["order"] = float(order)
            if link.gamma == OPTIMIZE:
                optimized["gamma"] = gamma
        elif _needs_gamma(link):
            if link.gamma == OPTIMIZE:
                ev = make_eval(m_order=order if isinstance(order, int) else 0)
                gamma, _ = best_gamma(ev)
                optimized["gamma"] = gamma
            elif link.gamma == ANALYTIC:
                # Likelihood-crossing threshold on the symbol count: the
                # first-symbol tap mass against the per-symbol noise.
                taps_arr = np.asarray(taps_csi.taps if isinstance(taps_csi, TapVector) else taps_csi)
                symbol_mass = float(taps_arr[:n_sym].sum())
                gamma = optimal_threshold(point.molecules_per_bit, symbol_mass, n_sym * lambda_csi)
                optimized["gamma"] = gamma
            else:
                gamma = float(link.gamma)

    if order == OPTIMIZE:  # pragma: no cover - resolved above
        order = 0
    order = int(order)

    detector = _make_detector(
        link, scheme, n_sym, taps_csi, lambda_csi, on_level, gamma, order, config.memory
    )
    return _LinkRuntime(
        link=link,
        scheme=scheme,
        b=bits_per_symbol(scheme),
        n_sym=n_sym,
        taps_channel=taps_channel,
        taps_tx=taps_tx,
        detector=detector,
        optimized=optimized,
        ab_delay_samples=ab_delay_samples,
        ab_scale=ab_scale_val,
    )


def _measure_point(
    config: ExperimentConfig,
    point: _Point,
    runtimes: List[_LinkRuntime],
    seed: int,
) -> List[Tuple[int, int]]:
    """Shared-noise measurement of all links at one point.

    Returns (bits, errors) per link.  Blocks stop early once a link has
    both min_errors errors and min_bits bits, or at the max_blocks cap.
    """
    s = config.block_symbols
    budget = PowerBudget(point.molecules_per_bit)
    noise = NoiseModel(point.lambda_s)
    grids = {}
    for rt in runtimes:
        grids[rt.sim_key] = grid_for_scheme(
            rt.scheme, point.t_b, config.n, config.memory, tau=point.tau
        )

    bits_done = [0] * len(runtimes)
    errors = [0] * len(runtimes)

    def done(i: int) -> bool:
        rt = runtimes[i]
        cap = config.max_blocks * s * rt.b
        if bits_done[i] >= cap:
            return True
        return errors[i] >= config.min_errors and bits_done[i] >= config.min_bits

    for block in range(config.max_blocks):
        active = [i for i in range(len(runtimes)) if not done(i)]
        if not active:
            break
        series_cache: Dict[tuple, SampleSeries] = {}
        bits_cache: Dict[int, np.ndarray] = {}
        for i in active:
            rt = runtimes[i]
            if rt.b not in bits_cache:
                bits_cache[rt.b] = (
                    _bits_rng(seed, _MEAS, block).integers(0, 2, s * rt.b).astype(np.uint8)
                )
            tx = bits_cache[rt.b]
            if rt.sim_key not in series_cache:
                schedule = rt.emit(tx, point, budget, grids[rt.sim_key])
                series_cache[rt.sim_key] = simulate_arrivals(
                    schedule, rt.taps_channel, noise, _sim_seed(seed, _MEAS, block)
                )
            decided = rt.decide(series_cache[rt.sim_key])
            errors[i] += int(np.count_nonzero(decided != tx))
            bits_done[i] += tx.size
    return list(zip(bits_done, errors))


def _point_reports(
    config: ExperimentConfig,
    value: float,
    seed: int,
    resolved: Optional[List[_LinkRuntime]] = None,
) -> List[BerReport]:
    start = time.perf_counter()
    point = _resolve_point(config, value)
    runtimes = resolved if resolved is not None else [
        _resolve_link(config, point, link, seed) for link in config.links
    ]
    counts = _measure_point(config, point, runtimes, seed)
    elapsed = time.perf_counter() - start
    reports = []
    for rt, (bits, errs) in zip(runtimes, counts):
        ber = errs / bits if bits else 0.0
        lo, hi = wilson_interval(errs, bits)
        reports.append(
            BerReport(
                sweep_var=config.sweep_axis,
                sweep_value=value,
                scheme=rt.scheme.name,
                detector=rt.link.label,
                bits=bits,
                errors=errs,
                ber=ber,
                ci_low=lo,
                ci_high=hi,
                optimized=dict(rt.optimized),
                seed=seed,
                runtime_s=elapsed,
                config=config,
            )
        )
    return reports


def run_point(config: ExperimentConfig, seed: Optional[int] = None) -> BerReport:
    """Measure the single configured link at the config's base point."""
    if len(config.links) != 1:
        raise ValueError("run_point expects exactly one link; use sweep() to compare")
    seed = config.seed if seed is None else seed
    base = _base_value(config)
    return _point_reports(config, base, seed)[0]


def _base_value(config: ExperimentConfig) -> float:
    axis = config.sweep_axis
    if axis == "m":
        return config.molecules_per_bit
    if axis == "tau":
        return config.tau
    if axis == "snr_db":
        return config.snr_db if config.snr_db is not None else 0.0
    return config.t_b


def _sweep_task(args):
    config, value, seed = args
    return _point_reports(config, value, seed)


def sweep(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    max_workers: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> List[BerReport]:
    """One BER measurement per (sweep value, link), shared noise per point.

    For tau sweeps, parameter optimization runs once on the synchronized
    channel and is shared across points (the receiver never learns tau).
    """
    seed = config.seed if seed is None else seed
    values = list(config.sweep_grid)
    reports: List[BerReport] = []

    if config.sweep_axis == "tau":
        # All points share the synchronized optimization inputs.
        base_point = _resolve_point(config, values[0])
        runtimes = [_resolve_link(config, base_point, link, seed) for link in config.links]
        for value in values:
            if progress:
                progress(f"tau={value:g}")
            point = _resolve_point(config, value)
            fresh = [
                dataclasses.replace(
                    rt,
                    taps_channel=build_taps(
                        config.geometry,
                        grid_for_scheme(rt.scheme, point.t_b, config.n, config.memory, tau=point.tau),
                    ),
                )
                for rt in runtimes
            ]
            reports.extend(_point_reports(config, value, seed, resolved=fresh))
    elif max_workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            for chunk in pool.map(_sweep_task, [(config, v, seed) for v in values]):
                reports.extend(chunk)
    else:
        for value in values:
            if progress:
                progress(f"{config.sweep_axis}={value:g}")
            reports.extend(_point_reports(config, value, seed))

    reports.sort(key=lambda r: (r.sweep_value, r.detector))
    return reports


def optimize_parameter(
    config: ExperimentConfig,
    parameter: str,
    seed: Optional[int] = None,
) -> Tuple[Dict[str, float], float]:
    """Search one tunable of the config's single link at its base point.

    parameter is one of gamma, alpha, order, ab.  Returns the optimized
    values and the BER achieved on the optimizer's block budget.
    """
    if len(config.links) != 1:
        raise ValueError("optimize_parameter expects exactly one link")
    link = config.links[0]
    if parameter == "gamma":
        link = dataclasses.replace(link, gamma=OPTIMIZE)
    elif parameter == "alpha":
        link = dataclasses.replace(link, alpha=OPTIMIZE)
    elif parameter == "order":
        link = dataclasses.replace(link, order=OPTIMIZE)
    elif parameter == "ab":
        if link.detector != "ftd" or link.scheme_kind != "bcsk":
            raise ValueError("a-b pre-equalization optimization needs a bcsk+ftd link")
        link = dataclasses.replace(link, precoder="ab", ab_delay=OPTIMIZE, ab_scale=OPTIMIZE)
    else:
        raise ValueError(f"unknown parameter {parameter!r} (gamma, alpha, order, ab)")
    cfg = dataclasses.replace(config, links=(link,))
    seed = cfg.seed if seed is None else seed
    point = _resolve_point(cfg, _base_value(cfg))
    runtime = _resolve_link(cfg, point, link, seed)
    if not runtime.optimized:
        raise ValueError(f"link {link.label!r} has no free {parameter} to optimize")
    ev = _OptEval(
        cfg,
        point,
        runtime.link,
        runtime.scheme,
        int(runtime.optimized.get("order", link.order if isinstance(link.order, int) else 0)),
        (runtime.ab_delay_samples, runtime.ab_scale),
        seed,
        runtime.taps_tx,
        point.lambda_s,
    )
    gamma = runtime.optimized.get("gamma", link.gamma if isinstance(link.gamma, float) else 0.0)
    errs = ev.errors(gamma)
    total_bits = cfg.opt_blocks * cfg.block_symbols * runtime.b
    return dict(runtime.optimized), errs / total_bits
