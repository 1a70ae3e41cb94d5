import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import chisquare, poisson

from dimcsim import (
    ChannelGeometry,
    EmissionSchedule,
    NoiseModel,
    SamplingGrid,
    arrival_means,
    build_taps,
    cumulative_hit,
    first_hit_density,
    simulate_arrivals,
    simulate_arrivals_gaussian,
)

GEOM = ChannelGeometry(10.0, 5.0, 80.0)
FAR = ChannelGeometry(15.0, 5.0, 80.0)


def test_density_vanishes_at_small_times():
    assert first_hit_density(1e-6, GEOM) < 1e-300
    assert first_hit_density(1e-4, GEOM) < 1e-20


def test_density_integrates_to_total_hit_probability():
    # Independent quadrature oracle against the closed form.
    for geom in (GEOM, FAR, ChannelGeometry(20.0, 8.0, 50.0)):
        total, err = quad(lambda t: first_hit_density(t, geom), 0, np.inf)
        assert total == pytest.approx(geom.total_hit_probability, abs=1e-7)


def test_density_rejects_nonpositive_times():
    with pytest.raises(ValueError):
        first_hit_density(0.0, GEOM)
    with pytest.raises(ValueError):
        first_hit_density(-1.0, GEOM)


def test_cumulative_boundary_values():
    assert cumulative_hit(0.0, GEOM) == 0.0
    assert cumulative_hit(1e18, GEOM) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        cumulative_hit(-0.1, GEOM)


def test_cumulative_matches_density_derivative():
    # Five-point central difference; relative error below 1e-8.
    ts = np.geomspace(0.05, 20.0, 25)
    for geom in (GEOM, FAR):
        for t in ts:
            h = 1e-3 * t
            stencil = np.array([t - 2 * h, t - h, t + h, t + 2 * h])
            f = cumulative_hit(stencil, geom)
            deriv = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
            assert deriv == pytest.approx(first_hit_density(t, geom), rel=1e-8)


def test_cumulative_monotone():
    ts = np.linspace(0.0, 50.0, 500)
    vals = cumulative_hit(ts, GEOM)
    assert np.all(np.diff(vals) >= 0)
    assert vals[-1] <= GEOM.total_hit_probability


def test_taps_telescope_to_cdf():
    grid = SamplingGrid(0.1, 5, 40)
    h = build_taps(GEOM, grid)
    assert len(h) == 200
    assert h.total == pytest.approx(cumulative_hit(200 * grid.t_sample, GEOM))
    assert h.total < GEOM.total_hit_probability
    assert h.taps[0] == pytest.approx(cumulative_hit(0.02, GEOM))


def test_taps_bounded_for_random_geometries():
    rng = np.random.default_rng(3)
    for _ in range(20):
        rr = rng.uniform(1, 8)
        geom = ChannelGeometry(rr + rng.uniform(0.5, 20), rr, rng.uniform(5, 200))
        grid = SamplingGrid(rng.uniform(0.01, 1.0), int(rng.integers(1, 8)), int(rng.integers(1, 30)))
        taps = build_taps(geom, grid)
        assert np.all(taps.taps >= 0)
        assert taps.total <= geom.total_hit_probability + 1e-12


def test_tap_shift_identity():
    grid = SamplingGrid(0.1, 5, 40)
    base = build_taps(GEOM, grid)
    lagged = build_taps(GEOM, grid.with_tau(grid.t_sample))
    # Equal up to float rounding of the window edges.
    assert np.allclose(lagged.taps[:-1], base.taps[1:], rtol=1e-12, atol=1e-18)


def test_negative_tau_clamps_to_zero():
    grid = SamplingGrid(0.1, 5, 40)
    lead = build_taps(GEOM, grid.with_tau(-2 * grid.t_sample))
    assert lead.taps[0] == 0.0
    assert lead.taps[1] == 0.0
    base = build_taps(GEOM, grid)
    assert np.allclose(lead.taps[2:], base.taps[:-2])


def _impulse_schedule(level, s, n):
    x = np.zeros((1, s * n))
    x[0, 0] = level
    return EmissionSchedule(x, s)


def test_noise_only_mean():
    x = EmissionSchedule(np.zeros((1, 10**6)), 10**6)
    h = build_taps(GEOM, SamplingGrid(0.1, 1, 1))
    y = simulate_arrivals(x, h, NoiseModel(2.0), [1])
    assert y.channels.mean() == pytest.approx(2.0, abs=0.01)


def test_impulse_response_mean():
    grid = SamplingGrid(0.1, 5, 8)
    h = build_taps(GEOM, grid)
    x = _impulse_schedule(2000.0, 8, 5)
    total = np.zeros(40)
    trials = 4000
    for t in range(trials):
        total += simulate_arrivals(x, h, NoiseModel(0.0), [9, t]).channels[0]
    mean = total / trials
    expected = 2000.0 * h.taps
    se = np.sqrt(np.maximum(expected, 1e-9) / trials)
    assert np.all(np.abs(mean - expected) < 4 * se + 1e-6)


def test_poisson_equidispersion():
    x = EmissionSchedule(np.full((1, 10**6), 0.0), 10**6)
    h = build_taps(GEOM, SamplingGrid(0.1, 1, 1))
    y = simulate_arrivals(x, h, NoiseModel(5.0), [2]).channels[0]
    ratio = y.var() / y.mean()
    assert 0.98 < ratio < 1.02


@pytest.mark.parametrize("lam", [0.4, 7.3, 55.0])
def test_poisson_goodness_of_fit(lam):
    # Chi-square against the exact Poisson pmf at the 1% level.
    x = EmissionSchedule(np.zeros((1, 10**5)), 10**5)
    h = build_taps(GEOM, SamplingGrid(0.1, 1, 1))
    y = simulate_arrivals(x, h, NoiseModel(lam), [4]).channels[0]
    hi = int(poisson.isf(1e-4, lam))
    counts = np.bincount(np.minimum(y, hi), minlength=hi + 1)
    probs = poisson.pmf(np.arange(hi + 1), lam)
    probs[hi] += poisson.sf(hi, lam)
    _, p_value = chisquare(counts, probs * y.size)
    assert p_value > 0.01


def test_same_seed_bit_identical():
    grid = SamplingGrid(0.1, 5, 10)
    h = build_taps(GEOM, grid)
    rng = np.random.default_rng(11)
    x = EmissionSchedule(rng.uniform(0, 100, (3, 250)), 50)
    a = simulate_arrivals(x, h, NoiseModel(1.0), [77, 0])
    b = simulate_arrivals(x, h, NoiseModel(1.0), [77, 0])
    assert np.array_equal(a.channels, b.channels)
    c = simulate_arrivals(x, h, NoiseModel(1.0), [77, 1])
    assert not np.array_equal(a.channels, c.channels)


def test_channels_use_independent_streams():
    grid = SamplingGrid(0.1, 1, 1)
    h = build_taps(GEOM, grid)
    x = EmissionSchedule(np.full((2, 2000), 50.0), 2000)
    y = simulate_arrivals(x, h, NoiseModel(3.0), [5])
    assert not np.array_equal(y.channels[0], y.channels[1])


def test_gaussian_noise_floor_moments():
    x = EmissionSchedule(np.zeros((1, 10**6)), 10**6)
    h = build_taps(GEOM, SamplingGrid(0.1, 1, 1))
    y = simulate_arrivals_gaussian(x, h, NoiseModel(4.0), [6]).channels[0]
    assert y.mean() == pytest.approx(4.0, abs=0.02)
    assert y.var() == pytest.approx(4.0, abs=0.05)


def test_gaussian_deterministic_mode_is_exact():
    grid = SamplingGrid(0.1, 5, 6)
    h = build_taps(GEOM, grid)
    rng = np.random.default_rng(8)
    x = EmissionSchedule(rng.uniform(0, 500, (1, 60)), 12)
    y = simulate_arrivals_gaussian(x, h, NoiseModel(1.5), None)
    assert np.array_equal(y.channels, arrival_means(x, h, NoiseModel(1.5)))


def test_gaussian_matches_poisson_moments():
    # Paired synthesis: first two moments agree within 3 standard errors
    # at every sample index.
    grid = SamplingGrid(0.1, 5, 4)
    h = build_taps(GEOM, grid)
    rng = np.random.default_rng(13)
    x = EmissionSchedule(rng.uniform(0, 800, (1, 40)), 8)
    noise = NoiseModel(2.0)
    trials = 6000
    pois = np.empty((trials, 40))
    gaus = np.empty((trials, 40))
    for t in range(trials):
        pois[t] = simulate_arrivals(x, h, noise, [21, t]).channels[0]
        gaus[t] = simulate_arrivals_gaussian(x, h, noise, [22, t]).channels[0]
    lam = arrival_means(x, h, noise)[0]
    se_mean = np.sqrt(lam / trials)
    assert np.all(np.abs(pois.mean(0) - gaus.mean(0)) < 3 * (se_mean * np.sqrt(2)) + 1e-9)
    se_var = lam * np.sqrt(2.0 / trials)  # var of sample variance ~ 2 lam^2 / n
    assert np.all(np.abs(pois.var(0) - gaus.var(0)) < 3 * (se_var * np.sqrt(2)) + 1e-9)


def test_geometry_invariants():
    with pytest.raises(ValueError):
        ChannelGeometry(5.0, 5.0, 80.0)
    with pytest.raises(ValueError):
        ChannelGeometry(10.0, 5.0, 0.0)
    with pytest.raises(ValueError):
        SamplingGrid(0.0, 5, 10)
