import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from herdnoise.sde import PowerLawSdeSpec, SampledSeries, StepControl, iter_sde
from herdnoise.stats import (
    BurstTracker,
    estimate_psd,
    extract_bursts,
    extract_bursts_stream,
    extract_threshold_intervals,
    fit_broken_power_law,
    fit_power_law_slope,
    histogram_slope,
    ks_against_cdf,
    ks_two_sample,
    log_binned_pdf,
    psd_slope,
    scale_by_mean,
)


def pareto(rng, expo, n):
    """Inverse-CDF draws with density ~ x^-expo on [1, inf)."""
    return (1.0 - rng.random(n)) ** (-1.0 / (expo - 1.0))


# -- log-binned PDF ---------------------------------------------------------

def test_uniform_density_is_flat():
    x = np.random.default_rng(0).uniform(1.0, 10.0, 10**6)
    h = log_binned_pdf(x, 10)
    m = h.counts > 0
    assert np.all(np.abs(h.density[m] * 9 - 1) < 0.05)


def test_pareto_oracle_is_exact_in_distribution():
    # check the sampler itself before trusting slopes measured on it
    x = pareto(np.random.default_rng(1), 3.0, 10**5)
    assert ks_against_cdf(x, lambda v: 1 - v ** -2.0) < 0.01


@pytest.mark.parametrize("expo", [3.0, 4.0])
def test_histogram_slope_recovers_exponent(expo):
    x = pareto(np.random.default_rng(2), expo, 10**6)
    fit = histogram_slope(x, (1.5, 15.0))
    assert fit.slope == pytest.approx(-expo, abs=0.1)


def test_truncated_pareto_slope():
    # density ~ x^-3 restricted to [1, 1e3]
    rng = np.random.default_rng(3)
    u = rng.random(10**6)
    x = (1 - u * (1 - 1e-6)) ** -0.5
    assert x.max() <= 1e3
    assert histogram_slope(x, (1.5, 100.0)).slope == pytest.approx(-3.0, abs=0.1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(1, 300),
              elements=st.floats(1e-6, 1e6, allow_nan=False)),
       st.integers(2, 20))
def test_normalization_holds(values, bpd):
    h = log_binned_pdf(values, bpd)
    assert np.sum(h.density * h.widths) == pytest.approx(1.0, rel=1e-9)
    assert np.all(np.diff(h.bin_edges) > 0) and np.all(h.density >= 0)


def test_log_binned_pdf_errors():
    with pytest.raises(ValueError):
        log_binned_pdf([1.0, 0.0])
    with pytest.raises(ValueError):
        log_binned_pdf([])
    with pytest.raises(ValueError):
        log_binned_pdf([1.0, 2.0], bins_per_decade=1)
    with pytest.raises(ValueError):
        log_binned_pdf([0.5, 2.0], edges=np.array([1.0, 10.0]))


# -- slope fits -------------------------------------------------------------

def test_exact_power_law_fit():
    x = np.logspace(0, 3, 20)
    fit = fit_power_law_slope(x, x ** -3.0)
    assert fit.slope == pytest.approx(-3.0, abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-10)
    assert fit_power_law_slope(x, np.full_like(x, 4.2)).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_needs_five_points():
    x = np.logspace(0, 3, 20)
    with pytest.raises(ValueError):
        fit_power_law_slope(x, x ** -1.0, fit_range=(1.0, 2.0))
    with pytest.raises(ValueError):
        fit_power_law_slope(x[:4], x[:4])


def test_broken_power_law_recovers_two_slopes():
    f = np.logspace(-3, 2, 60)
    fb = 0.1
    p = np.where(f < fb, (f / fb) ** -1.2, (f / fb) ** -0.4)
    fit = fit_broken_power_law(f, p, (1e-3, 1e2), n_grid=500)
    assert fit.beta_low == pytest.approx(1.2, abs=0.02)
    assert fit.beta_high == pytest.approx(0.4, abs=0.02)
    assert fit.f_break == pytest.approx(fb, rel=0.1)


# -- PSD --------------------------------------------------------------------

def test_white_noise_psd_is_flat():
    v = np.random.default_rng(4).standard_normal(2**20)
    psd = estimate_psd(v, n_segments=16, log_bins_per_decade=10, dt=1.0)
    fit = psd_slope(psd, (psd.freq[0], psd.freq[-1]))
    assert fit.slope == pytest.approx(0.0, abs=0.05)


def test_parseval():
    v = np.random.default_rng(5).standard_normal(2**16) * 3.0 + 1.0
    for dt in (1.0, 0.01):
        psd = estimate_psd(v, n_segments=1, dt=dt)
        df = psd.freq[0]
        assert np.sum(psd.power) * df == pytest.approx(v.var(), rel=1e-9)


def test_sinusoid_peak():
    dt = 0.01
    t = np.arange(2**14) * dt
    f0 = 3.2
    psd = estimate_psd(np.sin(2 * np.pi * f0 * t), dt=dt)
    assert psd.freq[np.argmax(psd.power)] == pytest.approx(f0, abs=1 / (t[-1] + dt))


def test_psd_of_sum_dominates_components():
    rng = np.random.default_rng(6)
    n = 2**18
    # AR(1) red noise plus independent white noise
    a = np.empty(n)
    a[0] = 0.0
    e = rng.standard_normal(n)
    for i in range(1, n):
        a[i] = 0.99 * a[i - 1] + e[i]
    w = 5.0 * rng.standard_normal(n)
    kw = dict(n_segments=32, log_bins_per_decade=8, dt=1.0)
    pa, pw, ps = (estimate_psd(v, **kw).power for v in (a, w, a + w))
    # estimator noise: relative error per bin ~ 1/sqrt(averaged ordinates)
    slack = 0.85
    assert np.all(ps >= slack * pa) and np.all(ps >= slack * pw)


def test_psd_errors():
    with pytest.raises(ValueError):
        estimate_psd(np.ones(10), n_segments=6)
    with pytest.raises(ValueError):
        estimate_psd(np.ones(10), n_segments=0)
    with pytest.raises(ValueError):
        estimate_psd(np.ones(4), t=np.array([0.0, 1.0, 2.5, 3.0]))


def test_sampled_series_frequency_units():
    v = np.random.default_rng(7).standard_normal(1000)
    psd = estimate_psd(SampledSeries(v, dt=0.5))
    assert psd.freq[-1] == pytest.approx(1.0)


# -- bursts -----------------------------------------------------------------

def test_burst_example():
    b = extract_bursts(np.array([0, 2, 2, 0, 0, 3, 0.0]), 1.0, dt=1.0)
    assert (b.tau.tolist(), b.T.tolist(), b.theta.tolist()) == ([2.0], [4.0], [2.0])


def test_threshold_equality_counts_as_above():
    b = extract_bursts(np.array([0, 1, 0, 1, 0.0]), 1.0)
    assert b.n_tau.tolist() == [1] and b.n_T.tolist() == [2]


def test_constant_below_threshold_is_empty():
    assert len(extract_bursts(np.zeros(50), 1.0)) == 0
    with pytest.raises(ValueError):
        extract_bursts(np.zeros(2), 1.0)


def test_burst_times_scale_with_dt():
    v = np.array([0, 2, 2, 0, 0, 3, 0.0])
    b = extract_bursts(SampledSeries(v, dt=0.5), 1.0)
    assert b.tau.tolist() == [1.0] and b.T.tolist() == [2.0]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(3, 400), elements=st.floats(-3, 3)),
       st.floats(-1, 1))
def test_T_equals_tau_plus_theta(values, h):
    b = extract_bursts(values, h)
    assert np.array_equal(b.n_T, b.n_tau + b.n_theta)
    assert np.all(b.n_tau >= 1) and np.all(b.n_theta >= 1)
    assert np.array_equal(b.T, b.tau + b.theta)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(3, 300), elements=st.floats(-3, 3)),
       st.integers(1, 50))
def test_streamed_bursts_match_one_shot(values, chunk):
    whole = extract_bursts(values, 0.5)
    pieces = (SampledSeries(values[i:i + chunk], dt=1.0) for i in range(0, len(values), chunk))
    streamed = extract_bursts_stream(pieces, 0.5)
    assert np.array_equal(whole.n_tau, streamed.n_tau)
    assert np.array_equal(whole.n_theta, streamed.n_theta)


def test_burst_tracker_empty():
    assert len(BurstTracker(1.0).result()) == 0


def test_burst_duration_three_halves_law():
    spec = PowerLawSdeSpec(2.5, 4.0, 1.0, 1000.0)
    dt = 1e-6
    b = extract_bursts_stream(iter_sde(spec, StepControl(), 20.0, dt, seed=3), 2.0)
    assert len(b) > 1000
    # tau_c(h_x = 2) = 0.0192; fit below tau_c / 10
    fit = histogram_slope(b.tau, (20 * dt, 1.9e-3))
    assert fit.slope == pytest.approx(-1.5, abs=0.15)


# -- threshold intervals ----------------------------------------------------

def test_threshold_interval_examples():
    ti = extract_threshold_intervals([0.1, 3, 0.2, 0.5, 3.5, 0.1], 2.0, pre_normalized=True)
    assert ti.intervals.tolist() == [3] and ti.mean_T == 3.0
    ti = extract_threshold_intervals([4.0, 5.0, 3.0, 9.0], 2.0)
    assert ti.intervals.tolist() == [1, 1, 1]
    ti = extract_threshold_intervals([0.1, 0.2, 0.3], 2.0)
    assert len(ti) == 0 and np.isnan(ti.mean_T)
    assert len(extract_threshold_intervals([0.1, 5.0, 0.3], 2.0)) == 0


def test_threshold_intervals_self_normalize():
    v = np.array([0.0, 10.0, 0.0, 0.0, 10.0, 0.0])
    # std (ddof=0) is 10 * sqrt(2/9) = 4.71, so 10 sits at 2.12 sd
    ti = extract_threshold_intervals(v, 2.0, pre_normalized=False)
    assert ti.intervals.tolist() == [3]
    assert len(extract_threshold_intervals(v, 2.2, pre_normalized=False)) == 0
    with pytest.raises(ValueError):
        extract_threshold_intervals(np.ones(5), 1.0, pre_normalized=False)
    with pytest.raises(ValueError):
        extract_threshold_intervals([], 1.0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 500), elements=st.floats(0, 10)),
       st.floats(0.1, 9))
def test_interval_count_and_scaling(values, q):
    ti = extract_threshold_intervals(values, q)
    n_exc = int(np.sum(values >= q))
    assert len(ti) == max(n_exc - 1, 0)
    assert np.all(ti.intervals >= 1)
    if len(ti):
        assert ti.mean_T == pytest.approx(ti.intervals.mean())
        assert ti.scaled().mean() == pytest.approx(1.0, abs=1e-12)
        assert ti.intervals.sum() == np.flatnonzero(values >= q)[[0, -1]] @ [-1, 1]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(0, 10)),
       st.lists(st.integers(1, 299), max_size=5))
def test_no_interval_spans_a_boundary(values, cuts):
    b = sorted({c for c in cuts if c < len(values)})
    ti = extract_threshold_intervals(values, 5.0, boundaries=b)
    expected = []
    edges = [0, *b, len(values)]
    for lo, hi in zip(edges[:-1], edges[1:]):
        expected += np.diff(np.flatnonzero(values[lo:hi] >= 5.0)).tolist()
    assert ti.intervals.tolist() == expected


def test_scale_by_mean():
    x = np.array([1, 2, 3, 10])
    assert scale_by_mean(x).mean() == pytest.approx(1.0, abs=1e-12)


# -- purity and KS helpers --------------------------------------------------

def test_estimators_are_pure():
    rng = np.random.default_rng(8)
    v = np.abs(rng.standard_normal(5000)) + 1e-3
    before = v.copy()
    h1, h2 = log_binned_pdf(v, 10), log_binned_pdf(v, 10)
    p1, p2 = estimate_psd(v, 4, 5), estimate_psd(v, 4, 5)
    t1, t2 = extract_threshold_intervals(v, 1.0, False), extract_threshold_intervals(v, 1.0, False)
    assert np.array_equal(v, before)
    assert np.array_equal(h1.density, h2.density) and np.array_equal(h1.counts, h2.counts)
    assert np.array_equal(p1.power, p2.power) and np.array_equal(p1.freq, p2.freq)
    assert np.array_equal(t1.intervals, t2.intervals)


def test_ks_helpers():
    rng = np.random.default_rng(9)
    a = rng.standard_normal(20000)
    assert ks_two_sample(a, a) == 0.0
    assert ks_two_sample(a, a + 10) == 1.0
    from scipy.stats import norm
    assert ks_against_cdf(a, norm.cdf) < 0.02
