"""Breakdown-flash spectrum from spectrometer-mode coincidence scans.

Each scan point records, for one grating setting, the coincidence count
``N_c`` within ``tau_c`` after a detector-1 breakdown and the singles counts
``N_1``, ``N_2`` over ``T`` seconds.  The normalised spectrum is

    I = alpha * (N_c - N_1 * N_2 * tau_c / T) / N_1

reported as measured, i.e. still weighted by the detecting diode's
efficiency and the spectrometer bandpass.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectra import DENSITY, SpectralCurve

DEFAULT_ALPHA = 1e3
COINCIDENCE_WINDOW_NS = 70.0
INTEGRATION_TIME_S = 50.0

SCAN_COLUMNS = ("wavelength_nm", "N_c", "N_1", "N_2", "T_s", "tau_c_ns")


@dataclass(frozen=True)
class SpectralScanPoint:
    wavelength: float
    N_c: int
    N_1: int
    N_2: int
    T: float
    tau_c: float

    def __post_init__(self):
        if min(self.N_c, self.N_1, self.N_2) < 0:
            raise ValueError("counts must be >= 0")
        if not self.T > 0:
            raise ValueError("integration time T must be > 0")
        if not self.tau_c > 0:
            raise ValueError("coincidence window tau_c must be > 0")

    @property
    def accidentals(self):
        return self.N_1 * self.N_2 * self.tau_c * 1e-9 / self.T


@dataclass
class ReconstructedSpectrum:
    curve: SpectralCurve
    raw: np.ndarray  # before clamping
    sigma: np.ndarray  # counting error on each value
    clamped: np.ndarray  # True where a negative value was set to 0
    excluded: list = field(default_factory=list)  # points dropped for N_1 == 0

    @property
    def wavelengths(self):
        return self.curve.wavelengths

    @property
    def values(self):
        return self.curve.values


def normalize_spectrum(scan, alpha=DEFAULT_ALPHA):
    """Accidental-corrected coincidences per detector-1 breakdown, times ``alpha``."""
    points = sorted(scan, key=lambda p: p.wavelength)
    excluded = [p for p in points if p.N_1 == 0]
    if excluded:
        warnings.warn(f"{len(excluded)} scan point(s) with N_1 = 0 excluded", stacklevel=2)
    points = [p for p in points if p.N_1 > 0]
    if len(points) < 2:
        raise ValueError("need at least 2 usable scan points")
    lam = np.array([p.wavelength for p in points], dtype=float)
    n1 = np.array([p.N_1 for p in points], dtype=float)
    nc = np.array([p.N_c for p in points], dtype=float)
    acc = np.array([p.accidentals for p in points])
    raw = alpha * (nc - acc) / n1
    sigma = alpha * np.sqrt(nc) / n1
    clamped = raw < 0
    curve = SpectralCurve(lam, np.where(clamped, 0.0, raw), DENSITY)
    return ReconstructedSpectrum(curve, raw, sigma, clamped, excluded)


def expected_spectrum(emission, efficiency, centers, solid_angle, coupling, fwhm, live_fraction=1.0, alpha=DEFAULT_ALPHA):
    """Mean reconstructed value at each grating setting for a known emission.

    ``alpha`` times the probability that a detector-1 breakdown puts a photon
    into a live detector 2: ``I·Ω·c·P_live·∫ S(λ) η(λ) g(λ - center) dλ`` with
    ``S`` the normalised emission spectrum and ``g`` the Gaussian bandpass.
    Valid while that probability is small (single-photon regime).
    """
    from .simulation import grating_transmission

    spectrum = emission.spectrum
    lo, hi = spectrum.support
    out = []
    for center in np.atleast_1d(np.asarray(centers, dtype=float)):
        a, b = max(lo, center - 6 * fwhm), min(hi, center + 6 * fwhm)
        if b <= a:
            out.append(0.0)
            continue
        grid = np.union1d(np.linspace(a, b, 2001), spectrum.wavelengths[(spectrum.wavelengths > a) & (spectrum.wavelengths < b)])
        integrand = spectrum(grid) * efficiency(grid) * grating_transmission(grid, center, fwhm)
        out.append(np.trapezoid(integrand, grid))
    scale = alpha * emission.differential_intensity_true * solid_angle * coupling * np.asarray(live_fraction)
    return scale * np.array(out)


@dataclass(frozen=True)
class Feature:
    kind: str  # "maximum" or "edge"
    wavelength: float


def locate_features(curve: SpectralCurve, max_fraction=0.1, edge_factor=3.0):
    """Spectral maxima and sharp falling edges.

    Maxima are local maxima of the 3-point smoothed curve above
    ``max_fraction`` of its peak.  Edges are local minima of the unsmoothed
    finite-difference derivative that are negative and steeper than
    ``edge_factor`` times the median absolute derivative; they sit between
    the two samples.
    """
    if len(curve) < 5:
        raise ValueError("need at least 5 samples")
    lam = curve.wavelengths
    y = np.convolve(curve.values, np.ones(3) / 3, mode="same")
    y[0], y[-1] = curve.values[0], curve.values[-1]
    features = []
    top = y.max()
    for i in range(1, y.size - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1] and y[i] > max_fraction * top:
            features.append(Feature("maximum", float(lam[i])))
    d = np.diff(curve.values) / np.diff(lam)
    mid = 0.5 * (lam[:-1] + lam[1:])
    threshold = edge_factor * np.median(np.abs(d))
    for i in range(d.size):
        left = d[i - 1] if i > 0 else np.inf
        right = d[i + 1] if i < d.size - 1 else np.inf
        if d[i] < 0 and d[i] < left and d[i] <= right and -d[i] > threshold:
            features.append(Feature("edge", float(mid[i])))
    return sorted(features, key=lambda f: f.wavelength)


def format_scan(scan, header_lines=()):
    lines = [f"# {h}" for h in header_lines]
    lines.append(",".join(SCAN_COLUMNS))
    for p in scan:
        lines.append(f"{p.wavelength:.4f},{p.N_c},{p.N_1},{p.N_2},{p.T:.9g},{p.tau_c:.9g}")
    return "\n".join(lines) + "\n"


def write_scan(scan, path, header_lines=()):
    Path(path).write_text(format_scan(scan, header_lines))


def read_scan(path):
    points = []
    header_seen = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if not header_seen:
                header_seen = True
                continue
            parts = text.split(",")
            if len(parts) != len(SCAN_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(SCAN_COLUMNS)} columns, got {len(parts)}")
            try:
                points.append(SpectralScanPoint(
                    float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]), float(parts[5])
                ))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return points
