import numpy as np
import pytest

from apdflash.emission import EmissionModel
from apdflash.simulation import DetectorConfig, simulate_scan, spectrometer_optics
from apdflash.spectra import SpectralCurve, detection_efficiency
from apdflash.spectrum import (
    SpectralScanPoint,
    expected_spectrum,
    locate_features,
    normalize_spectrum,
    read_scan,
    write_scan,
)

from oracles import fine_quadrature

N1, N2, T, TAU_C = 10**6, 3 * 10**5, 50.0, 70.0
ACC = 420  # N1 * N2 * tau_c / T


def point(lam, n_c, n1=N1, n2=N2, t=T):
    return SpectralScanPoint(lam, n_c, n1, n2, t, TAU_C)


def test_accidental_arithmetic():
    assert point(800.0, 0).accidentals == pytest.approx(ACC)


def test_pure_accidental_gives_zero():
    r = normalize_spectrum([point(800.0, ACC), point(805.0, ACC)])
    np.testing.assert_allclose(r.values, 0.0, atol=1e-12)
    assert not r.clamped.any()


def test_paper_arithmetic_case():
    r = normalize_spectrum([point(800.0, ACC + 500), point(805.0, ACC)], alpha=1e3)
    assert r.values[0] == pytest.approx(0.5)


def test_negative_values_clamped_and_flagged():
    r = normalize_spectrum([point(800.0, ACC - 40), point(805.0, ACC + 100)])
    assert r.values[0] == 0.0 and r.clamped[0] and r.raw[0] < 0
    assert not r.clamped[1]


def test_zero_breakdowns_excluded():
    scan = [point(800.0, 500), point(805.0, 0, n1=0), point(810.0, 600)]
    with pytest.warns(UserWarning, match="excluded"):
        r = normalize_spectrum(scan)
    assert list(r.wavelengths) == [800.0, 810.0]
    assert [p.wavelength for p in r.excluded] == [805.0]


def test_points_sorted():
    r = normalize_spectrum([point(810.0, 900), point(800.0, 500)])
    assert list(r.wavelengths) == [800.0, 810.0]


def test_linear_in_alpha():
    g = np.random.default_rng(1)
    scan = [point(700.0 + 5 * i, int(n)) for i, n in enumerate(g.integers(400, 2000, 20))]
    a = normalize_spectrum(scan, 1e3)
    b = normalize_spectrum(scan, 2e3)
    np.testing.assert_array_equal(b.values, 2 * a.values)


def test_invariant_under_consistent_scaling():
    base = point(860.0, ACC + 800)
    doubled = SpectralScanPoint(860.0, 2 * (ACC + 800), 2 * N1, 2 * N2, 2 * T, TAU_C)
    a = normalize_spectrum([base, point(865.0, ACC)])
    b = normalize_spectrum([doubled, point(865.0, ACC)])
    assert b.values[0] == pytest.approx(a.values[0], rel=1e-12)


def test_point_validation():
    with pytest.raises(ValueError):
        SpectralScanPoint(800.0, -1, 1, 1, 1.0, 70.0)
    with pytest.raises(ValueError):
        SpectralScanPoint(800.0, 1, 1, 1, 0.0, 70.0)
    with pytest.raises(ValueError):
        SpectralScanPoint(800.0, 1, 1, 1, 1.0, 0.0)


def test_triangle_has_one_maximum():
    lam = np.arange(700.0, 1001.0, 5.0)
    curve = SpectralCurve(lam, np.maximum(0.0, 1 - np.abs(lam - 860.0) / 60.0))
    feats = locate_features(curve)
    maxima = [f.wavelength for f in feats if f.kind == "maximum"]
    assert len(maxima) == 1 and abs(maxima[0] - 860.0) <= 5.0


def test_flat_curve_has_no_features():
    lam = np.arange(700.0, 1001.0, 5.0)
    assert locate_features(SpectralCurve(lam, np.ones_like(lam))) == []


def test_step_edge_found():
    lam = np.arange(700.0, 1001.0, 5.0)
    y = np.where(lam < 872.0, 1.0, 0.2) + 0.001 * (lam - 700.0)
    edges = [f.wavelength for f in locate_features(SpectralCurve(lam, y)) if f.kind == "edge"]
    assert edges == [872.5]


def test_too_few_samples():
    with pytest.raises(ValueError):
        locate_features(SpectralCurve([1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 2.0, 1.0]))


def test_scan_file_round_trip(tmp_path):
    scan = [point(700.0 + 5 * i, 400 + i) for i in range(5)]
    p = tmp_path / "scan.csv"
    write_scan(scan, p, ["seed = 1"])
    assert read_scan(p) == scan


def test_scan_file_diagnostics(tmp_path):
    p = tmp_path / "scan.csv"
    p.write_text("wavelength_nm,N_c,N_1,N_2,T_s,tau_c_ns\n700,1,2,3,50,70\n705,1,x,3,50,70\n")
    with pytest.raises(ValueError, match=":3:"):
        read_scan(p)


def test_expected_spectrum_against_fine_quadrature():
    em = EmissionModel()
    eta = detection_efficiency()
    centers = [705.0, 860.0, 872.0, 913.0, 995.0]
    got = expected_spectrum(em, eta, centers, 0.0218, 0.025, 3.3, live_fraction=0.99)
    for c, value in zip(centers, got):
        f = lambda x: em.spectrum(x) * eta(x) * np.exp(-4 * np.log(2) * ((x - c) / 3.3) ** 2)
        want = 1e3 * em.differential_intensity_true * 0.0218 * 0.025 * 0.99 * fine_quadrature(f, 700.0, 1000.0, 0.002)
        assert value == pytest.approx(want, rel=1e-4)


@pytest.mark.slow
def test_round_trip_converges_with_integration_time():
    dets = [DetectorConfig(1, ambient_rate=17500.0), DetectorConfig(2, ambient_rate=5000.0)]
    opt = spectrometer_optics()
    centers = [860.0, 880.0, 900.0]
    spread = {}
    for T in (50.0, 200.0, 800.0):
        scan = simulate_scan(dets, opt, centers, T, seed=int(T))
        r = normalize_spectrum(scan)
        live = np.array([1 - p.N_2 / p.T * dets[1].dead_time * 1e-9 for p in scan])
        model = expected_spectrum(dets[0].emission, dets[1].efficiency, centers, opt.solid_angle_1to2,
                                  opt.coupling_efficiency, opt.grating_fwhm, live)
        dev = np.abs(r.raw - model)
        assert np.all(dev < 3 * r.sigma)
        spread[T] = (dev.max(), r.sigma.mean())
    # counting error, and with it the deviation bound, falls as 1/sqrt(T)
    assert spread[800.0][1] == pytest.approx(spread[50.0][1] / 4, rel=0.05)
    assert spread[200.0][1] == pytest.approx(spread[50.0][1] / 2, rel=0.05)
    assert spread[800.0][0] < spread[50.0][0]
