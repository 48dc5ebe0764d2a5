import numpy as np
import pytest
from scipy import stats

from apdflash.circuit import BreakdownProfile
from apdflash.emission import (
    FOUR_PI,
    DomainError,
    EmissionModel,
    calibrated_true_intensity,
    mean_efficiency,
    sample_flash,
    sample_flash_counts,
    spectrum_cdf_inverse,
)
from apdflash.spectra import SpectralCurve, default_emission_spectrum, detection_efficiency

from oracles import binned_emg, cdf_bisection

OMEGA_3MM = 4.67e-4


def analytic_cdf(curve, x):
    """CDF of a piecewise-linear density, segment by segment."""
    lam, val = curve.wavelengths, curve.values
    seg_mass = 0.5 * (val[1:] + val[:-1]) * np.diff(lam)
    cum = np.concatenate(([0.0], np.cumsum(seg_mass)))
    i = np.clip(np.searchsorted(lam, x, side="right") - 1, 0, lam.size - 2)
    s = x - lam[i]
    slope = (val[i + 1] - val[i]) / (lam[i + 1] - lam[i])
    return (cum[i] + val[i] * s + 0.5 * slope * s * s) / cum[-1]


def test_zero_solid_angle_is_empty(rng):
    m = EmissionModel(136.5)
    assert all(sample_flash(m, 10.0, 0.0, rng).shape == (0, 2) for _ in range(1000))


def test_mean_photon_number(rng):
    m = EmissionModel(136.5)
    n = sum(len(sample_flash(m, 0.0, OMEGA_3MM, rng)) for _ in range(10**6))
    mean = n / 1e6
    assert mean == pytest.approx(0.0638, rel=5e-3)


def test_wavelength_ks_distance(rng):
    m = EmissionModel(136.5)
    lam = np.sort(m.draw_wavelengths(rng, 10**6))
    cdf = analytic_cdf(m.spectrum, lam)
    n = lam.size
    d = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert d < 0.002


def test_emission_time_chi_square(rng):
    prof = BreakdownProfile()
    m = EmissionModel(136.5, timing=prof)
    t = m.draw_delays(rng, 10**6)
    edges = np.concatenate(([-np.inf], prof.onset_t0 + np.arange(-1.6, 25.0, 0.2), [np.inf]))
    observed = np.histogram(t, edges)[0]
    expected = binned_emg(np.clip(edges, -1e3, 1e3), prof.decay_tau, prof.jitter_sigma, prof.onset_t0, t.size)
    assert expected.min() > 5
    chi2 = np.sum((observed - expected) ** 2 / expected)
    p = stats.chi2.sf(chi2, observed.size - 1)
    assert p > 0.01


def test_emission_times_follow_breakdown(rng):
    m = EmissionModel(136.5)
    ph = sample_flash(m, 1000.0, 1.0, rng)
    assert ph.shape[0] > 50
    assert np.all(ph[:, 0] > 1000.0 - 10 * m.timing.jitter_sigma + m.timing.onset_t0)


def test_count_linear_in_solid_angle(rng):
    m = EmissionModel(136.5)
    n = 10**5
    a = np.array([len(sample_flash(m, 0.0, 0.01, rng)) for _ in range(n)])
    b = np.array([len(sample_flash(m, 0.0, 0.02, rng)) for _ in range(n)])
    err = np.sqrt(b.var() / n + 4 * a.var() / n)
    assert abs(b.mean() - 2 * a.mean()) < 3 * err


def test_batched_counts_match_mean(rng):
    m = EmissionModel(136.5)
    c = sample_flash_counts(m, 10**6, OMEGA_3MM, rng)
    assert c.mean() == pytest.approx(136.5 * OMEGA_3MM, rel=5e-3)


def test_wavelength_support(rng):
    m = EmissionModel(136.5)
    lam = sample_flash(m, 0.0, 4.0, rng)[:, 1]
    assert lam.size > 100
    assert lam.min() >= 700.0 and lam.max() <= 1000.0
    assert m.draw_wavelengths(rng, 10**5).min() >= 700.0


@pytest.mark.parametrize("omega", [-1e-6, FOUR_PI + 1e-6])
def test_solid_angle_domain(rng, omega):
    with pytest.raises(DomainError):
        sample_flash(EmissionModel(136.5), 0.0, omega, rng)


def test_inverse_cdf_examples():
    s = default_emission_spectrum()
    assert spectrum_cdf_inverse(s, 0.0) == pytest.approx(700.0)
    rect = SpectralCurve([800.0, 900.0], [1.0, 1.0])
    assert spectrum_cdf_inverse(rect, 0.5) == pytest.approx(850.0)


def test_inverse_cdf_against_bisection():
    s = default_emission_spectrum()
    u = np.arange(1, 10) / 10
    got = spectrum_cdf_inverse(s, u)
    want = [cdf_bisection(s.wavelengths, s.values, ui) for ui in u]
    np.testing.assert_allclose(got, want, atol=0.01)


def test_inverse_cdf_monotone_and_bounded():
    s = SpectralCurve([700.0, 750.0, 760.0, 900.0], [0.0, 2.0, 0.0, 0.0])
    u = np.linspace(0, 1, 5001)[:-1]
    x = spectrum_cdf_inverse(s, u)
    assert np.all(np.diff(x) >= 0)
    assert x.min() >= 700.0 and x.max() <= 900.0


@pytest.mark.parametrize("u", [-0.1, 1.0, 1.5])
def test_inverse_cdf_domain(u):
    with pytest.raises(DomainError):
        spectrum_cdf_inverse(default_emission_spectrum(), u)


def test_model_validation():
    with pytest.raises(DomainError):
        EmissionModel(-1.0)
    with pytest.raises(DomainError):
        EmissionModel(1.0, angular_model="lambertian")
    m = EmissionModel(10.0)
    assert m.spectrum.integral() == pytest.approx(1.0)


def test_default_calibration_gives_39_detected():
    m = EmissionModel()
    eta = detection_efficiency()
    detected = m.differential_intensity_true * mean_efficiency(m.spectrum, eta)
    assert detected == pytest.approx(39.0, rel=1e-12)
    assert calibrated_true_intensity() == pytest.approx(m.differential_intensity_true)
