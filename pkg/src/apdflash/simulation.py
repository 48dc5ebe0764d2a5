"""Event-driven Monte Carlo of two Geiger-mode APDs exchanging breakdown flashes.

Two optical arrangements are supported: detectors facing each other through
an aperture, and a grating spectrometer between them acting as a tunable
bandpass.  Output is a time-ordered stream of ``(detector_id, timestamp_ns)``
events, with detector 1's timestamps shifted by the electronic delay line.
"""

import heapq
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .circuit import BreakdownProfile
from .emission import FOUR_PI, EmissionModel
from .spectra import SpectralCurve, detection_efficiency

FACING = "facing"
SPECTROMETER = "spectrometer"

DARK_RATE = 500.0
DEAD_TIME_NS = 1000.0
ACTIVE_DIAMETER_UM = 500.0
SOLID_ANGLE_3MM = 4.67e-4
SOLID_ANGLE_5MM = 1.3e-3
DELAY_LINE_NS = 63.0
GRATING_FWHM_NM = 3.3
SPECTROMETER_SOLID_ANGLE = 0.0218
# grating efficiency and transfer losses between the two diodes
SPECTROMETER_COUPLING = 0.025


class ConfigError(ValueError):
    pass


def _finite_nonneg(name, value):
    if not np.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be finite and >= 0, got {value}")


@dataclass
class DetectorConfig:
    id: int
    dark_rate: float = DARK_RATE
    ambient_rate: float = 0.0
    dead_time: float = DEAD_TIME_NS
    efficiency: SpectralCurve = field(default_factory=detection_efficiency)
    active_diameter: float = ACTIVE_DIAMETER_UM
    breakdown_profile: BreakdownProfile = field(default_factory=BreakdownProfile)
    emission: EmissionModel = None

    def __post_init__(self):
        _finite_nonneg("dark_rate", self.dark_rate)
        _finite_nonneg("ambient_rate", self.ambient_rate)
        _finite_nonneg("dead_time", self.dead_time)
        if not self.active_diameter > 0:
            raise ConfigError("active_diameter must be > 0")
        if np.any(self.efficiency.values > 1):
            raise ConfigError("efficiency values must lie in [0, 1]")
        if self.emission is None:
            self.emission = EmissionModel(timing=self.breakdown_profile)

    @property
    def background_rate(self):
        return self.dark_rate + self.ambient_rate


@dataclass
class OpticsConfig:
    mode: str = FACING
    solid_angle_1to2: float = SOLID_ANGLE_3MM
    solid_angle_2to1: float = SOLID_ANGLE_3MM
    delay_line: float = DELAY_LINE_NS
    coupling_efficiency: float = 1.0
    grating_center: float = 860.0
    grating_fwhm: float = GRATING_FWHM_NM

    def __post_init__(self):
        if self.mode not in (FACING, SPECTROMETER):
            raise ConfigError(f"mode must be {FACING!r} or {SPECTROMETER!r}")
        for name in ("solid_angle_1to2", "solid_angle_2to1"):
            value = getattr(self, name)
            if not 0 <= value <= FOUR_PI:
                raise ConfigError(f"{name} must lie in [0, 4π] sr, got {value}")
        if not 0 <= self.coupling_efficiency <= 1:
            raise ConfigError("coupling_efficiency must lie in [0, 1]")
        if not np.isfinite(self.delay_line):
            raise ConfigError("delay_line must be finite")
        if self.mode == SPECTROMETER and not self.grating_fwhm > 0:
            raise ConfigError("grating_fwhm must be > 0 in spectrometer mode")


class EventRecord(NamedTuple):
    detector_id: int
    timestamp: float


@dataclass(eq=False)
class EventStream:
    """Time-ordered detection events of one run; ``duration`` in seconds."""

    detector: np.ndarray
    timestamp: np.ndarray
    duration: float

    def __len__(self):
        return self.timestamp.size

    def __iter__(self):
        for d, t in zip(self.detector.tolist(), self.timestamp.tolist()):
            yield EventRecord(d, t)

    def times(self, detector_id):
        return self.timestamp[self.detector == detector_id]

    def rate(self, detector_id):
        return np.count_nonzero(self.detector == detector_id) / self.duration

    def shifted(self, detector_id, offset):
        """Copy with one detector's timestamps moved by ``offset`` ns (re-sorted)."""
        t = self.timestamp.copy()
        t[self.detector == detector_id] += offset
        order = np.lexsort((self.detector, t))
        return EventStream(self.detector[order], t[order], self.duration)


def grating_transmission(wavelength, center, fwhm):
    """Gaussian bandpass with unit peak and the given FWHM (nm)."""
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm}")
    lam = np.asarray(wavelength, dtype=float)
    return np.exp(-4.0 * np.log(2.0) * ((lam - center) / fwhm) ** 2)


class _FlashChannel:
    """Photons from breakdowns of one detector that survive to the other."""

    def __init__(self, source: DetectorConfig, target: DetectorConfig, optics: OpticsConfig, solid_angle):
        self.model = source.emission
        self.mean = self.model.mean_photons(solid_angle)
        self.target_efficiency = target.efficiency
        self.optics = optics

    def survival(self, wavelengths):
        p = self.optics.coupling_efficiency * self.target_efficiency(wavelengths)
        if self.optics.mode == SPECTROMETER:
            p = p * grating_transmission(wavelengths, self.optics.grating_center, self.optics.grating_fwhm)
        return p

    def survivors(self, rng, counts):
        """Arrival offsets of surviving photons, grouped per breakdown.

        Returns ``(n_surviving_per_breakdown, offsets)`` with ``offsets``
        ordered by breakdown.
        """
        total = int(counts.sum())
        if total == 0:
            return np.zeros(counts.size, dtype=np.int64), np.empty(0)
        owner = np.repeat(np.arange(counts.size), counts)
        delays = self.model.draw_delays(rng, total)
        lam = self.model.draw_wavelengths(rng, total)
        keep = rng.random(total) < self.survival(lam)
        # photons cannot arrive before the breakdown that emits them
        offsets = np.maximum(delays[keep], 0.0)
        n_surv = np.bincount(owner[keep], minlength=counts.size)
        return n_surv, offsets


def _background_times(rng, rate, duration_ns):
    n = rng.poisson(rate * duration_ns * 1e-9)
    return np.sort(rng.uniform(0.0, duration_ns, n))


def simulate(detectors, optics: OpticsConfig, duration, seed) -> EventStream:
    """Run both detectors for ``duration`` seconds and return their events.

    Background breakdowns are Poisson (dark + ambient) with non-paralyzable
    dead time.  Every breakdown emits a flash; photons reaching the live
    opposite detector trigger it at their arrival time.  Cascades follow
    naturally.  Deterministic for a fixed ``seed``.
    """
    if len(detectors) != 2:
        raise ConfigError("exactly two detectors are required")
    if not (np.isfinite(duration) and duration > 0):
        raise ConfigError(f"duration must be > 0, got {duration}")
    for det in detectors:
        if not np.isfinite(det.background_rate):
            raise ConfigError("non-finite rate")
    d1, d2 = detectors
    duration_ns = duration * 1e9
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng_bg = [np.random.default_rng(s) for s in root.spawn(2)]
    rng_flash, rng_cascade = (np.random.default_rng(s) for s in root.spawn(2))

    channels = [
        _FlashChannel(d1, d2, optics, optics.solid_angle_1to2),
        _FlashChannel(d2, d1, optics, optics.solid_angle_2to1),
    ]
    dead = [float(d1.dead_time), float(d2.dead_time)]

    cand = [_background_times(rng_bg[k], det.background_rate, duration_ns) for k, det in enumerate(detectors)]
    n_surv = []
    offsets = []
    for k in range(2):
        counts = rng_flash.poisson(channels[k].mean, cand[k].size)
        ns, off = channels[k].survivors(rng_flash, counts)
        n_surv.append(ns)
        offsets.append(off)

    times = np.concatenate(cand)
    owner = np.concatenate([np.zeros(cand[0].size, np.int64), np.ones(cand[1].size, np.int64)])
    order = np.argsort(times, kind="stable")
    ns_all = np.concatenate(n_surv)[order]
    # start of each candidate's survivors inside its detector's offset array
    starts = np.concatenate([np.cumsum(n) - n for n in n_surv])[order]

    accepted = _event_loop(
        times[order].tolist(),
        owner[order].tolist(),
        ns_all.tolist(),
        starts.tolist(),
        [o.tolist() for o in offsets],
        dead,
        channels,
        rng_cascade,
        duration_ns,
    )
    bg_mask, induced = accepted
    sel = order[np.frombuffer(bg_mask, dtype=np.uint8).astype(bool)]
    all_t = [times[sel][owner[sel] == k] for k in range(2)]
    all_t = [np.sort(np.concatenate((all_t[k], np.asarray(induced[k])))) for k in range(2)]
    all_t[0] = all_t[0] + optics.delay_line

    t = np.concatenate(all_t)
    det = np.concatenate([np.full(all_t[0].size, d1.id), np.full(all_t[1].size, d2.id)])
    order = np.lexsort((det, t))
    return EventStream(det[order], t[order], float(duration))


def _event_loop(times, owner, ns_all, starts, offsets, dead, channels, rng, duration_ns):
    n = len(times)
    accepted = bytearray(n)
    induced = ([], [])
    live_at = [-np.inf, -np.inf]
    heap = []
    seq = 0
    push = heapq.heappush
    pop = heapq.heappop

    def fire_induced(limit):
        nonlocal seq
        while heap and heap[0][0] <= limit:
            ta, _, k = pop(heap)
            if ta < live_at[k]:
                continue
            live_at[k] = ta + dead[k]
            induced[k].append(ta)
            ch = channels[k]
            c = rng.poisson(ch.mean)
            if c:
                ns, off = ch.survivors(rng, np.array([c]))
                for o in off.tolist():
                    seq += 1
                    push(heap, (ta + o, seq, 1 - k))

    for i in range(n):
        t = times[i]
        if heap and heap[0][0] <= t:
            fire_induced(t)
        k = owner[i]
        if t < live_at[k]:
            continue
        live_at[k] = t + dead[k]
        accepted[i] = 1
        c = ns_all[i]
        if c:
            off = offsets[k]
            s = starts[i]
            for j in range(s, s + c):
                seq += 1
                push(heap, (t + off[j], seq, 1 - k))
    fire_induced(duration_ns)
    # drop triggers past the end of the run
    for k in range(2):
        while induced[k] and induced[k][-1] >= duration_ns:
            induced[k].pop()
    return accepted, induced


def spectrometer_optics(center=860.0, **kwargs):
    """Optics of the grating arrangement (collimating lens f = 150 mm, ~25 mm clear aperture)."""
    params = dict(
        mode=SPECTROMETER,
        solid_angle_1to2=SPECTROMETER_SOLID_ANGLE,
        solid_angle_2to1=SPECTROMETER_SOLID_ANGLE,
        coupling_efficiency=SPECTROMETER_COUPLING,
        grating_center=center,
    )
    params.update(kwargs)
    return OpticsConfig(**params)


def scan_point(events, wavelength, tau_c, delay, detector_ids=(1, 2)):
    """Reduce one grating setting's event stream to a scan point."""
    from .spectrum import SpectralScanPoint
    from .timing import count_window_pairs

    id1, id2 = detector_ids
    n_c = count_window_pairs(events, tau_c, delay, detector_ids)
    n1 = int(np.count_nonzero(events.detector == id1))
    n2 = int(np.count_nonzero(events.detector == id2))
    return SpectralScanPoint(float(wavelength), n_c, n1, n2, events.duration, float(tau_c))


def _scan_worker(args):
    detectors, optics, center, duration, tau_c, seed = args
    opt = replace(optics, grating_center=float(center))
    events = simulate(detectors, opt, duration, seed)
    return scan_point(events, center, tau_c, opt.delay_line, (detectors[0].id, detectors[1].id))


def simulate_scan(detectors, optics, wavelengths, duration, tau_c=70.0, seed=0, jobs=1):
    """Spectrometer scan: one simulated run of ``duration`` s per grating setting.

    Each point gets its own seed spawned from ``seed``, so the result does
    not depend on ``jobs``.
    """
    if optics.mode != SPECTROMETER:
        raise ConfigError("simulate_scan needs spectrometer-mode optics")
    children = np.random.SeedSequence(seed).spawn(len(wavelengths))
    tasks = [(detectors, optics, lam, duration, tau_c, child) for lam, child in zip(wavelengths, children)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_scan_worker, tasks))
    return [_scan_worker(t) for t in tasks]


class EventFileError(ValueError):
    pass


EVENT_HEADER = "detector_id,timestamp_ns"


def format_events(events, header_lines=()):
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"# duration_s = {events.duration:.9g}")
    lines.append(EVENT_HEADER)
    lines += [f"{d},{t:.4f}" for d, t in zip(events.detector.tolist(), events.timestamp.tolist())]
    return "\n".join(lines) + "\n"


def write_events(events, path, header_lines=()):
    Path(path).write_text(format_events(events, header_lines))


def read_events(path, duration=None):
    """Load an event file; ``duration`` (s) defaults to the header value or the last timestamp."""
    det, ts = [], []
    header_seen = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, sep, value = text[1:].partition("=")
                if sep and key.strip() == "duration_s" and duration is None:
                    try:
                        duration = float(value)
                    except ValueError:
                        raise EventFileError(f"{path}:{lineno}: bad duration_s value") from None
                continue
            if not header_seen:
                if text.replace(" ", "") != EVENT_HEADER:
                    raise EventFileError(f"{path}:{lineno}: expected header {EVENT_HEADER!r}")
                header_seen = True
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise EventFileError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            try:
                d, t = int(parts[0]), float(parts[1])
            except ValueError:
                raise EventFileError(f"{path}:{lineno}: cannot parse {text!r}") from None
            if not np.isfinite(t) or t < 0:
                raise EventFileError(f"{path}:{lineno}: timestamp must be finite and >= 0")
            if ts and t < ts[-1]:
                raise EventFileError(f"{path}:{lineno}: timestamps must be nondecreasing")
            det.append(d)
            ts.append(t)
    if not header_seen:
        raise EventFileError(f"{path}: missing header line {EVENT_HEADER!r}")
    timestamp = np.array(ts, dtype=float)
    if duration is None:
        duration = timestamp[-1] * 1e-9 if timestamp.size else 0.0
    if not duration > 0:
        raise EventFileError(f"{path}: cannot determine run duration")
    return EventStream(np.array(det, dtype=np.int64), timestamp, float(duration))
