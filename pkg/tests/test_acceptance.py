"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Ordering checks run the shipped figure presets at full budget (at least
1e5 bits per point) and require non-overlapping 95% confidence intervals
on the deciding comparisons.  Run with `pytest -s tests/test_acceptance.py`
to see the per-criterion lines.
"""
import time

import numpy as np
from scipy.integrate import quad
from scipy.stats import poisson

from dimcsim import (
    ChannelGeometry,
    DecisionAidedDetector,
    DerivativeMaxDetector,
    FeedbackMaxDetector,
    FixedThresholdDetector,
    MaxSampleDetector,
    PowerBudget,
    SchemeDescriptor,
    SequenceDetector,
    apply_difference,
    bits_per_symbol,
    cumulative_hit,
    difference_matrix,
    emit_results,
    first_hit_density,
    grid_for_scheme,
    load_preset,
    modulate,
    parse_config,
    preset_names,
    render_config,
)
from dimcsim.detection import LOG_FLOOR, optimal_threshold
from dimcsim.harness import run_point, sweep

_SWEEPS = {}


def _sweep_cached(name):
    if name not in _SWEEPS:
        _SWEEPS[name] = sweep(load_preset(name))
    return _SWEEPS[name]


def _by_link(reports):
    table = {}
    for r in reports:
        table.setdefault(r.detector, []).append(r)
    for rows in table.values():
        rows.sort(key=lambda r: r.sweep_value)
    return table


def _separated(lower, upper):
    """Non-overlapping 95% intervals with the right ordering."""
    return lower.ci_high < upper.ci_low


def _verdict(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" -- {detail}"
    print(line)
    assert ok, line


def test_criterion_01_channel_oracle():
    start = time.perf_counter()
    geometries = [
        ChannelGeometry(10.0, 5.0, 80.0),
        ChannelGeometry(15.0, 5.0, 80.0),
        ChannelGeometry(20.0, 8.0, 50.0),
    ]
    ok = True
    for geom in geometries:
        limit = cumulative_hit(1e18, geom)
        ok &= abs(limit - geom.total_hit_probability) < 1e-6
        total, _ = quad(lambda t: first_hit_density(t, geom), 0, np.inf)
        ok &= abs(total - geom.total_hit_probability) < 1e-6
        for t in np.geomspace(0.05, 20.0, 40):
            h = 1e-3 * t
            stencil = np.array([t - 2 * h, t - h, t + h, t + 2 * h])
            f = cumulative_hit(stencil, geom)
            deriv = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
            ok &= abs(deriv / first_hit_density(t, geom) - 1.0) < 1e-8
    elapsed = time.perf_counter() - start
    _verdict(
        "criterion 1: channel oracle (limit 1e-6, derivative 1e-8)",
        ok and elapsed < 1.0,
        f"{elapsed:.2f}s",
    )


def _brute_force_mlsd(y, taps, lam, on_level, n):
    s = y.size // n
    best_bits, best_metric = None, -np.inf
    for code in range(1 << s):
        bits = np.array([(code >> (s - 1 - i)) & 1 for i in range(s)])
        x = np.zeros(s * n)
        x[np.arange(s) * n] = on_level * bits
        lam_vec = np.convolve(x, taps)[: s * n] + lam
        terms = y * np.log(np.maximum(lam_vec, LOG_FLOOR)) - lam_vec
        metric = sum(terms.reshape(s, n).sum(axis=1))
        if metric > best_metric:
            best_metric, best_bits = metric, bits
    return best_bits


def test_criterion_02_sequence_detector_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        s = int(rng.integers(2, 11))
        memory = int(rng.integers(1, 5))
        n = int(rng.integers(1, 4))
        m = float(rng.uniform(5, 60))
        lam = float(rng.uniform(0.1, 4.0))
        taps = rng.uniform(0.005, 0.2, memory * n)
        bits = rng.integers(0, 2, s)
        x = np.zeros(s * n)
        x[np.arange(s) * n] = 2 * m * bits
        y = rng.poisson(np.convolve(x, taps)[: s * n] + lam).astype(float)
        det = SequenceDetector(taps, lam, on_level=2 * m, n=n, band=memory)
        if not np.array_equal(det.predict(y), _brute_force_mlsd(y, taps, lam, 2 * m, n)):
            mismatches += 1
    elapsed = time.perf_counter() - start
    _verdict(
        "criterion 2: Viterbi equals exhaustive search (200 instances)",
        mismatches == 0 and elapsed < 10.0,
        f"{mismatches} mismatches, {elapsed:.1f}s",
    )


def test_criterion_03_analytic_ber_oracle():
    start = time.perf_counter()
    base = """
[channel]
r0 = 10.0
rr = 5.0
d = 80.0

[grid]
t_b = 1.0
n = 1
l = 1
tau = 0.0

[noise]
lambda_s = {lam}

[power]
m = {m}

[harness]
block_symbols = 2000
max_blocks = 50
min_errors = 1000000
min_bits = 100000
seed = 303

[sweep]
axis = m
grid = {m}

[link:ftd]
scheme = bcsk
detector = ftd
gamma = analytic
"""
    geom = ChannelGeometry(10.0, 5.0, 80.0)
    h1 = cumulative_hit(1.0, geom)
    ok = True
    details = []
    for m, lam in ((20.0, 2.0), (15.0, 3.0), (30.0, 1.0)):
        cfg = parse_config(base.format(m=m, lam=lam))
        report = run_point(cfg)
        gamma = optimal_threshold(m, h1, lam)
        k = int(np.floor(gamma))
        want = 0.5 * (poisson.sf(k, lam) + poisson.cdf(k, 2 * m * h1 + lam))
        se = np.sqrt(want * (1 - want) / report.bits)
        ok &= abs(report.ber - want) < 3 * se
        details.append(f"M={m:g}: {report.ber:.2e} vs {want:.2e}")
    elapsed = time.perf_counter() - start
    _verdict(
        "criterion 3: no-ISI threshold BER matches Poisson-tail closed form",
        ok and elapsed < 30.0,
        "; ".join(details) + f", {elapsed:.0f}s",
    )


def test_criterion_04_low_rate_detector_ordering():
    table = _by_link(_sweep_cached("fig7"))
    values = sorted({r.sweep_value for r in _sweep_cached("fig7")})
    upper = [v for v in values if v >= values[len(values) // 2]]
    ok = True
    for v in upper:
        pick = lambda d: next(r for r in table[d] if r.sweep_value == v)
        for strong in ("mlda", "addf"):
            for weak in ("ftd", "atd", "ads"):
                ok &= _separated(pick(strong), pick(weak))
    # The fixed-threshold curve is monotone nonincreasing in M up to
    # confidence-interval overlap.
    ftd = table["ftd"]
    for prev, cur in zip(ftd, ftd[1:]):
        ok &= cur.ber <= prev.ber or cur.ci_low <= prev.ci_high
    _verdict(
        "criterion 4: decision-feedback receivers dominate at high power (fig7)",
        ok,
        f"upper grid {upper}",
    )


def test_criterion_05_high_rate_derivative_crossover():
    table = _by_link(_sweep_cached("fig8"))
    top = max(r.sweep_value for r in _sweep_cached("fig8"))
    pick = lambda d: next(r for r in table[d] if r.sweep_value == top)
    d2, d3, mlda = pick("d2ads"), pick("d3ads"), pick("mlda")
    ok = _separated(d2, mlda) and _separated(d2, d3)
    _verdict(
        "criterion 5: second-order derivative beats feedback and third order at high M (fig8)",
        ok,
        f"d2={d2.ber:.3e} d3={d3.ber:.3e} mlda={mlda.ber:.3e}",
    )


def test_criterion_06_small_lag_benefit():
    table = _by_link(_sweep_cached("fig10"))
    ftd = table["ftd"]
    best = min(ftd, key=lambda r: r.ber)
    sync = next(r for r in ftd if r.sweep_value == 0.0)
    ok = best.sweep_value > 0.0 and _separated(best, sync)
    _verdict(
        "criterion 6: optimal receiver lag is strictly positive for ftd (fig10)",
        ok,
        f"argmin tau={best.sweep_value:g} ({best.ber:.3e} vs {sync.ber:.3e} at 0)",
    )


def test_criterion_07_sequential_test_robustness():
    ok = True
    details = []
    for name in ("fig9", "fig10"):
        table = _by_link(_sweep_cached(name))
        worst = {d: max(rows, key=lambda r: r.ber) for d, rows in table.items()}
        sprt = worst.pop("dfesprt")
        ok &= all(_separated(sprt, other) for other in worst.values())
        runner_up = min(worst.values(), key=lambda r: r.ber)
        details.append(f"{name}: {sprt.ber:.3e} vs next {runner_up.ber:.3e}")
    _verdict(
        "criterion 7: sequential test has the smallest worst-case BER over lag",
        ok,
        "; ".join(details),
    )


def test_criterion_08_transmitter_vs_receiver_equalization():
    table = _by_link(_sweep_cached("fig11"))
    ok = True
    for mlda, atract, ftd in zip(table["mlda"], table["atract"], table["ftd"]):
        ok &= _separated(mlda, atract) and _separated(atract, ftd)
    _verdict(
        "criterion 8: mlda < atract-style < ftd across the power grid (fig11)",
        ok,
        "; ".join(f"M={r.sweep_value:.3g}" for r in table["mlda"]),
    )


def test_criterion_09_joint_keying_wins():
    table = _by_link(_sweep_cached("fig12"))
    ok = True
    for mcpm, bcsk, ppm in zip(table["mcpm"], table["bcsk"], table["ppm"]):
        ok &= _separated(mcpm, bcsk) and _separated(mcpm, ppm)
        ok &= 0.5 < mcpm.optimized.get("alpha", 0.0) < 1.0
    _verdict(
        "criterion 9: optimized joint keying beats intensity-only and time-only (fig12)",
        ok,
        "; ".join(f"M={r.sweep_value:.3g}: {r.ber:.2e}" for r in table["mcpm"]),
    )


def test_criterion_10_property_suite():
    start = time.perf_counter()
    problems = []

    # Power audit: 1% of the per-bit budget for every scheme.
    schemes = [
        SchemeDescriptor("bcsk"),
        SchemeDescriptor("ppm", k=4),
        SchemeDescriptor("mcpm", k=4),
        SchemeDescriptor("mosk", k=4),
        SchemeDescriptor("dmosk"),
        SchemeDescriptor("mcsk"),
        SchemeDescriptor("gmosk", k=4, k_active=2),
        SchemeDescriptor("maaf", k=16, b_info=2),
        SchemeDescriptor("mssk", num_channels=4),
    ]
    rng = np.random.default_rng(10)
    for scheme in schemes:
        b = bits_per_symbol(scheme)
        bits = rng.integers(0, 2, (100_000 // b) * b).astype(np.uint8)
        grid = grid_for_scheme(scheme, 0.1, 4, 2)
        per_bit = modulate(bits, scheme, PowerBudget(77.0), grid).channels.sum() / bits.size
        if abs(per_bit / 77.0 - 1.0) > 0.01:
            problems.append(f"power audit {scheme.name}: {per_bit:.2f}")

    # Degenerate consistency chain.
    y1 = rng.poisson(6.0, 2000).astype(float)
    y4 = rng.poisson(6.0, 2000).astype(float)
    taps = rng.uniform(0.01, 0.1, 12)
    m, h1, lam = 50.0, 0.3, 2.0
    checks = [
        (
            "ads(n=1) == ftd",
            MaxSampleDetector(5.0, 1).predict(y1),
            FixedThresholdDetector(5.0, 1).predict(y1),
        ),
        (
            "derivative order 0 == ads",
            DerivativeMaxDetector(5.0, 4, 0).predict(y4),
            MaxSampleDetector(5.0, 4).predict(y4),
        ),
        (
            "addf without history == ads",
            FeedbackMaxDetector(5.0, taps, 20.0, 4, feedback_memory=0).predict(y4),
            MaxSampleDetector(5.0, 4).predict(y4),
        ),
        (
            "mlda without interference == crossing threshold",
            DecisionAidedDetector(np.array([h1]), lam, 2 * m, 1).predict(y1),
            FixedThresholdDetector(optimal_threshold(m, h1, lam), 1).predict(y1),
        ),
    ]
    for name, got, want in checks:
        if not np.array_equal(got, want):
            problems.append(name)

    # Differenced-noise covariance equals D^m S D^T m.
    size, draws, order = 8, 100_000, 2
    variances = rng.uniform(0.5, 4.0, size)
    noise = rng.normal(size=(draws, size)) * np.sqrt(variances)
    emp = np.cov(apply_difference(noise, order).T, bias=True)
    dm = np.linalg.matrix_power(difference_matrix(size), order)
    want = dm @ np.diag(variances) @ dm.T
    se = np.sqrt((np.outer(np.diag(want), np.diag(want)) + want**2) / draws)
    if not np.all(np.abs(emp - want) < 3.5 * se + 1e-9):
        problems.append("derivative covariance")

    # Seed determinism: byte-identical CSV on a rerun.
    tiny = parse_config(
        """
[channel]
r0 = 10.0
rr = 5.0
d = 80.0
[grid]
t_b = 0.5
n = 2
l = 3
tau = 0.0
[noise]
snr_db = 12.0
[power]
m = 200.0
[harness]
block_symbols = 1000
max_blocks = 10
min_errors = 100000
min_bits = 5000
seed = 42
[sweep]
axis = m
grid = 150.0, 300.0
[optimizer]
blocks = 3
grid_points = 9
refine_rounds = 1
[link:ftd]
scheme = bcsk
detector = ftd
gamma = optimize
[link:mlda]
scheme = bcsk
detector = mlda
l_prime = 3
"""
    )
    if emit_results(sweep(tiny)) != emit_results(sweep(tiny)):
        problems.append("csv determinism")

    # Configuration round trip over every shipped preset.
    for name in preset_names():
        cfg = load_preset(name)
        if parse_config(render_config(cfg)) != cfg:
            problems.append(f"round trip {name}")

    elapsed = time.perf_counter() - start
    _verdict(
        "criterion 10: property suite (power, consistency chain, covariance, determinism, round trip)",
        not problems and elapsed < 120.0,
        "; ".join(problems) if problems else f"{elapsed:.0f}s",
    )
