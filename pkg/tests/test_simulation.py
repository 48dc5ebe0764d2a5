import numpy as np
import pytest
from scipy import integrate

from apdflash.emission import EmissionModel
from apdflash.simulation import (
    SOLID_ANGLE_3MM,
    SOLID_ANGLE_5MM,
    ConfigError,
    DetectorConfig,
    EventFileError,
    OpticsConfig,
    format_events,
    grating_transmission,
    read_events,
    simulate,
    simulate_scan,
    spectrometer_optics,
    write_events,
)
from apdflash.timing import build_histogram, fit_emg_peak

DETECTED = 39.0


def canonical(ambient1=2134.0, ambient2=183.0, **kw):
    return [DetectorConfig(1, ambient_rate=ambient1, **kw), DetectorConfig(2, ambient_rate=ambient2, **kw)]


def test_same_seed_identical():
    a = simulate(canonical(), OpticsConfig(), 5.0, seed=7)
    b = simulate(canonical(), OpticsConfig(), 5.0, seed=7)
    c = simulate(canonical(), OpticsConfig(), 5.0, seed=8)
    assert format_events(a) == format_events(b)
    assert format_events(a) != format_events(c)


def test_stream_invariants():
    opt = OpticsConfig(solid_angle_1to2=0.05, solid_angle_2to1=0.05)
    ev = simulate(canonical(20000.0, 20000.0), opt, 2.0, seed=3)
    assert np.all(np.diff(ev.timestamp) >= 0)
    assert ev.timestamp.min() >= 0
    for k in (1, 2):
        t = ev.times(k)
        assert np.all(np.diff(t) >= 1000.0 - 1e-6)


def test_non_paralyzable_rate():
    off = EmissionModel(0.0)
    nominal = 200000.0
    dets = [DetectorConfig(k, dark_rate=0.0, ambient_rate=nominal, emission=off) for k in (1, 2)]
    T = 1.0
    ev = simulate(dets, OpticsConfig(), T, seed=9)
    expected = nominal / (1 + nominal * 1000e-9)
    for k in (1, 2):
        n = np.count_nonzero(ev.detector == k)
        assert abs(n - expected * T) < 3 * np.sqrt(expected * T)


def test_one_sided_flash_peak_position_and_shape():
    off = EmissionModel(0.0)
    d1 = DetectorConfig(1, ambient_rate=2134.0)
    d2 = DetectorConfig(2, ambient_rate=183.0, emission=off)
    opt = OpticsConfig(solid_angle_1to2=5e-3)
    ev = simulate([d1, d2], opt, 60.0, seed=4)
    h = build_histogram(ev)
    right = h.counts[h.select(64, 100)].sum()
    assert right < 0.01 * h.counts[h.select(30, 62)].sum()
    fit = fit_emg_peak(h, "left")
    prof = d1.breakdown_profile
    assert fit.t0 == pytest.approx(opt.delay_line - prof.onset_t0, abs=0.1)
    assert fit.tau == pytest.approx(prof.decay_tau, rel=0.05)
    assert fit.sigma == pytest.approx(prof.jitter_sigma, rel=0.10)


def test_peak_ratio_follows_solid_angles():
    opt = OpticsConfig(solid_angle_1to2=SOLID_ANGLE_5MM, solid_angle_2to1=SOLID_ANGLE_3MM)
    T = 60.0
    ev = simulate(canonical(), opt, T, seed=12)
    h = build_histogram(ev)
    r1, r2 = h.singles_rates

    def net(lo, hi):
        m = h.select(lo, hi)
        acc = r1 * r2 * m.sum() * h.bin_width * 1e-9 * T
        return h.counts[m].sum() - acc, np.sqrt(h.counts[m].sum())

    left, e_left = net(35.0, 62.0)
    right, e_right = net(64.0, 95.0)
    p12 = -np.expm1(-DETECTED * opt.solid_angle_1to2)
    p21 = -np.expm1(-DETECTED * opt.solid_angle_2to1)
    live1, live2 = 1 - r1 * 1e-6, 1 - r2 * 1e-6
    # breakdowns induced by the partner's flash find the partner still dead
    n1, n2 = r1 * T - right, r2 * T - left
    expected = (n1 * p12 * live2) / (n2 * p21 * live1)
    ratio = left / right
    err = ratio * np.hypot(e_left / left, e_right / right)
    assert abs(ratio - expected) < 3 * err


def test_flash_off_has_no_peak():
    off = EmissionModel(0.0)
    dets = canonical(emission=off)
    ev = simulate(dets, OpticsConfig(), 30.0, seed=1)
    h = build_histogram(ev)
    assert h.counts[h.select(50, 75)].sum() < 3 * max(1.0, h.counts.mean() * h.select(50, 75).sum())


def test_grating_transmission():
    assert grating_transmission(860.0, 860.0, 3.3) == pytest.approx(1.0)
    assert grating_transmission(861.65, 860.0, 3.3) == pytest.approx(0.5, abs=1e-9)
    assert grating_transmission(858.35, 860.0, 3.3) == pytest.approx(0.5, abs=1e-9)
    area, _ = integrate.quad(grating_transmission, 800, 920, args=(860.0, 3.3), points=[860.0], epsabs=1e-13)
    assert area == pytest.approx(3.3 * np.sqrt(np.pi / (4 * np.log(2))), rel=1e-6)
    with pytest.raises(ValueError):
        grating_transmission(860.0, 860.0, 0.0)


@pytest.mark.parametrize(
    "make",
    [
        lambda: DetectorConfig(1, dark_rate=np.inf),
        lambda: DetectorConfig(1, ambient_rate=-1.0),
        lambda: DetectorConfig(1, dead_time=-5.0),
        lambda: DetectorConfig(1, active_diameter=0.0),
        lambda: OpticsConfig(solid_angle_1to2=13.0),
        lambda: OpticsConfig(coupling_efficiency=1.5),
        lambda: OpticsConfig(mode="mirror"),
        lambda: OpticsConfig(mode="spectrometer", grating_fwhm=0.0),
    ],
)
def test_config_errors(make):
    with pytest.raises(ConfigError):
        make()


@pytest.mark.parametrize("duration", [0.0, -1.0, np.nan])
def test_bad_duration(duration):
    with pytest.raises(ConfigError):
        simulate(canonical(), OpticsConfig(), duration, seed=0)


def test_event_file_round_trip(tmp_path):
    ev = simulate(canonical(), OpticsConfig(), 1.0, seed=2)
    p = tmp_path / "ev.csv"
    write_events(ev, p, ["seed = 2"])
    back = read_events(p)
    assert back.duration == 1.0
    np.testing.assert_array_equal(back.detector, ev.detector)
    np.testing.assert_allclose(back.timestamp, ev.timestamp, atol=1e-4)
    assert format_events(back, ["seed = 2"]) == p.read_text()


@pytest.mark.parametrize(
    "body, lineno",
    [
        ("detector_id,timestamp_ns\n1,10.0\n2,abc\n", 3),
        ("detector_id,timestamp_ns\n1,10.0\n2,5.0\n", 3),
        ("detector_id,timestamp_ns\n1,10.0,3\n", 2),
        ("time,det\n1,10.0\n", 1),
        ("# duration_s = 1\ndetector_id,timestamp_ns\n1,-4\n", 3),
    ],
)
def test_event_file_diagnostics(tmp_path, body, lineno):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(EventFileError, match=f":{lineno}:"):
        read_events(p)


def test_scan_independent_of_jobs():
    dets = [DetectorConfig(1, ambient_rate=17500.0), DetectorConfig(2, ambient_rate=5000.0)]
    opt = spectrometer_optics()
    a = simulate_scan(dets, opt, [850.0, 860.0, 870.0], 1.0, seed=3, jobs=1)
    b = simulate_scan(dets, opt, [850.0, 860.0, 870.0], 1.0, seed=3, jobs=2)
    assert a == b
    with pytest.raises(ConfigError):
        simulate_scan(dets, OpticsConfig(), [860.0], 1.0)
