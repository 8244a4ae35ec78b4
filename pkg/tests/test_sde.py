import math

import numpy as np
import pytest
import scipy.optimize
import scipy.special
from hypothesis import given, settings, strategies as st

from herdnoise.sde import (
    GenericSdeSpec,
    PowerLawSdeSpec,
    SampledSeries,
    StepControl,
    band_is_empty,
    bessel_first_zero,
    bessel_j,
    bessel_order,
    burst_crossover_time,
    diffusion,
    drift,
    iter_sde,
    one_over_f_spec,
    predicted_beta,
    psd_validity_range,
    simulate_sde,
)
from herdnoise.stats import histogram_slope


def test_drift_examples():
    assert drift(PowerLawSdeSpec(1.5, 3.0), 7.3) == 0.0
    assert drift(PowerLawSdeSpec(2.5, 4.0), 1.0) == pytest.approx(0.5)
    assert drift(PowerLawSdeSpec(2.5, 4.0), 2.0) == pytest.approx(8.0)


def test_diffusion_examples():
    assert diffusion(PowerLawSdeSpec(2.5, 4.0), 2.0) == pytest.approx(2 ** 2.5)
    assert diffusion(PowerLawSdeSpec(1.5, 3.0), 1.0) == 1.0
    assert one_over_f_spec().diffusion(0.0) == 1.0


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_drift_and_diffusion_reject_nonpositive_x(x):
    spec = PowerLawSdeSpec(2.5, 4.0)
    with pytest.raises(ValueError):
        drift(spec, x)
    with pytest.raises(ValueError):
        diffusion(spec, x)


def test_spec_validation():
    with pytest.raises(ValueError):
        PowerLawSdeSpec(2.5, 4.0, x_min=0.0)
    with pytest.raises(ValueError):
        PowerLawSdeSpec(2.5, 4.0, x_min=5.0, x_max=5.0)
    with pytest.raises(ValueError):
        StepControl(kappa=1.0)
    with pytest.raises(ValueError):
        StepControl(max_step=0.0)


def test_predicted_beta_examples():
    assert predicted_beta(PowerLawSdeSpec(2.5, 4.0)) == pytest.approx(4 / 3)
    assert predicted_beta(PowerLawSdeSpec(1.5, 3.0)) == pytest.approx(1.0)
    assert predicted_beta(PowerLawSdeSpec(2.5, 3.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        predicted_beta(PowerLawSdeSpec(1.0, 3.0))


def test_psd_validity_range_examples():
    lo, hi = psd_validity_range(PowerLawSdeSpec(2.5, 4.0, 1.0, 100.0))
    assert lo == pytest.approx(1 / (2 * math.pi))
    assert hi == pytest.approx(1e6 / (2 * math.pi))
    lo, hi = psd_validity_range(PowerLawSdeSpec(1.5, 3.0, 1.0, 100.0))
    assert (lo, hi) == pytest.approx((1 / (2 * math.pi), 100 / (2 * math.pi)))
    # the eta < 1 band needs x_max < x_min, so it is empty for every valid spec
    for eta, lo, hi in [(0.5, 1.0, 100.0), (0.5, 0.01, 0.1), (0.9, 1.0, 1e4), (0.1, 2.0, 3.0)]:
        assert band_is_empty(psd_validity_range(PowerLawSdeSpec(eta, 3.0, lo, hi)))
    with pytest.raises(ValueError):
        psd_validity_range(PowerLawSdeSpec(1.0, 3.0))


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.5, 7.0])
def test_bessel_zero_matches_independent_root(nu):
    j = bessel_first_zero(nu)
    # independent: scipy's jv with brentq on a bracket found by scanning
    xs = np.linspace(max(nu, 1e-3), nu + 10, 4000)
    vals = scipy.special.jv(nu, xs)
    k = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    ref = scipy.optimize.brentq(lambda x: scipy.special.jv(nu, x), xs[k], xs[k + 1],
                                xtol=1e-14)
    assert j == pytest.approx(ref, rel=1e-10)
    if float(nu).is_integer():
        assert j == pytest.approx(scipy.special.jn_zeros(int(nu), 1)[0], rel=1e-10)


def test_bessel_series_against_scipy():
    for nu in (0.0, 1.5, 4.0):
        for x in (0.3, 2.0, 9.0):
            assert bessel_j(nu, x) == pytest.approx(scipy.special.jv(nu, x), abs=1e-12)
        # series cancellation grows with x
        assert bessel_j(nu, 20.0) == pytest.approx(scipy.special.jv(nu, 20.0), abs=1e-8)


def test_bessel_order_convention():
    assert bessel_order(PowerLawSdeSpec(2.5, 4.0)) == pytest.approx(0.0)
    assert bessel_order(PowerLawSdeSpec(2.5, 5.5)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        bessel_order(PowerLawSdeSpec(0.5, 3.0))


def test_burst_crossover_examples():
    spec = PowerLawSdeSpec(2.5, 4.0)
    tc = burst_crossover_time(spec, 2.0)
    j0 = scipy.special.jn_zeros(0, 1)[0]
    assert tc == pytest.approx(2 / (2.25 * 8 * j0 ** 2), rel=1e-10)
    assert tc == pytest.approx(0.019213, rel=1e-4)
    assert burst_crossover_time(spec, 5.0) == pytest.approx(0.0012296, rel=1e-4)
    assert burst_crossover_time(spec, 4.0) / tc == pytest.approx(1 / 8)
    with pytest.raises(ValueError):
        burst_crossover_time(PowerLawSdeSpec(0.5, 3.0), 2.0)
    with pytest.raises(ValueError):
        burst_crossover_time(spec, 0.0)


def test_simulate_is_deterministic_and_seed_sensitive():
    spec = PowerLawSdeSpec(2.5, 4.0, 1.0, 100.0)
    a = simulate_sde(spec, StepControl(), 5.0, 0.01, seed=7)
    b = simulate_sde(spec, StepControl(), 5.0, 0.01, seed=7)
    c = simulate_sde(spec, StepControl(), 5.0, 0.01, seed=8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert len(a) == 501 and a.dt == 0.01


def test_iter_pieces_concatenate_to_full_run():
    spec = PowerLawSdeSpec(2.5, 4.0, 1.0, 100.0)
    full = simulate_sde(spec, StepControl(), 20.0, 0.01, seed=2)
    pieces = list(iter_sde(spec, StepControl(), 20.0, 0.01, seed=2, chunk=333))
    assert len(pieces) > 1
    assert np.array_equal(np.concatenate([p.values for p in pieces]), full.values)


def test_generic_python_callables_run():
    spec = GenericSdeSpec(drift=lambda x: -x, diffusion=lambda x: 1.0, x_min=-5.0, x_max=5.0)
    s = simulate_sde(spec, StepControl(max_step=1e-2), 50.0, 0.1, seed=1, x0=0.0)
    assert np.all(np.abs(s.values) <= 5.0)
    # OU with unit rate: stationary variance 1/2
    assert s.values[100:].var() == pytest.approx(0.5, rel=0.35)


@settings(max_examples=15, deadline=None)
@given(eta=st.sampled_from([0.75, 1.5, 2.5]), lam=st.floats(2.0, 5.0),
       x_max=st.floats(5.0, 200.0), seed=st.integers(0, 2**32))
def test_reflection_keeps_samples_in_bounds(eta, lam, x_max, seed):
    spec = PowerLawSdeSpec(eta, lam, 1.0, x_max)
    s = simulate_sde(spec, StepControl(kappa=0.2), 0.5, 0.005, seed=seed)
    assert np.all(np.isfinite(s.values))
    assert s.values.min() >= 1.0 and s.values.max() <= x_max


def test_zero_drift_stationary_pdf():
    # lambda = 2 eta: zero drift, stationary density ~ x^(-2 eta) between reflecting bounds
    spec = PowerLawSdeSpec(1.5, 3.0, 1.0, 100.0)
    s = simulate_sde(spec, StepControl(0.1), 2000.0, 2e-3, seed=5, burn_in=10.0)
    fit = histogram_slope(s.values, (2.0, 50.0))
    assert fit.slope == pytest.approx(-3.0, abs=0.2)


def test_sampled_series_csv_round_trip(tmp_path):
    s = SampledSeries(np.array([1.0, 2.5, 1e-17, 3.0]), dt=0.25, t0=1.0, seed=42,
                      meta={"spec": "x"})
    path = s.to_csv(tmp_path / "s.csv")
    assert path.read_text().splitlines()[0] == "t,value"
    assert (tmp_path / "s.csv.meta.json").exists()
    back = SampledSeries.from_csv(path)
    assert np.array_equal(back.values, s.values)
    assert back.dt == pytest.approx(0.25) and back.t0 == 1.0 and back.seed == 42


def test_sampled_series_rejects_nonuniform_time(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,value\n0,1\n1,2\n3,3\n")
    with pytest.raises(ValueError):
        SampledSeries.from_csv(p)
