"""Light emitted by one breakdown: photon number, emission times, wavelengths.

Emission is isotropic, so the photon number collected into a solid angle is
Poisson with mean ``differential_intensity_true * solid_angle``.  Emission
times are assumed to follow the discharge current.
"""

from dataclasses import dataclass, field

import numpy as np

from .circuit import BreakdownProfile, sample_emg
from .spectra import DENSITY, SpectralCurve, default_emission_spectrum, detection_efficiency

FOUR_PI = 4.0 * np.pi

# photons/sr per breakdown seen by the facing detector through the 3 mm aperture
DEFAULT_DETECTED_INTENSITY = 39.0


class DomainError(ValueError):
    pass


def _check_solid_angle(solid_angle):
    if not 0 <= solid_angle <= FOUR_PI:
        raise DomainError(f"solid angle must lie in [0, 4π] sr, got {solid_angle}")


class _InverseCdf:
    """Inverse CDF of a piecewise-linear density (quadratic within each segment)."""

    def __init__(self, curve: SpectralCurve):
        x, y = curve.wavelengths, curve.values
        h = np.diff(x)
        mass = 0.5 * (y[:-1] + y[1:]) * h
        total = mass.sum()
        if total <= 0:
            raise DomainError("spectrum has zero integral")
        self.x = x
        self.y = y / total
        self.slope = np.diff(self.y) / h
        self.cdf = np.concatenate(([0.0], np.cumsum(mass / total)))
        self.cdf[-1] = 1.0
        self.h = h

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        seg = np.searchsorted(self.cdf, u, side="right") - 1
        seg = np.clip(seg, 0, self.h.size - 1)
        r = u - self.cdf[seg]
        y0 = self.y[seg]
        m = self.slope[seg]
        # stable root of y0*s + m*s^2/2 = r
        disc = np.sqrt(np.maximum(y0 * y0 + 2.0 * m * r, 0.0))
        denom = y0 + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2.0 * r / denom, 0.0)
        s = np.clip(s, 0.0, self.h[seg])
        return self.x[seg] + s


def spectrum_cdf_inverse(spectrum: SpectralCurve, u):
    """Wavelength at cumulative probability ``u`` of the normalised spectrum."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(u_arr >= 1):
        raise DomainError("u must lie in [0, 1)")
    out = _InverseCdf(spectrum)(u_arr)
    return float(out) if out.ndim == 0 else out


def mean_efficiency(spectrum: SpectralCurve, efficiency: SpectralCurve):
    """Efficiency averaged over the normalised emission spectrum."""
    lo, hi = spectrum.support
    grid = np.union1d(spectrum.wavelengths, efficiency.wavelengths)
    grid = grid[(grid >= lo) & (grid <= hi)]
    s = spectrum(grid)
    return float(np.trapezoid(s * efficiency(grid), grid) / np.trapezoid(s, grid))


def calibrated_true_intensity(detected=DEFAULT_DETECTED_INTENSITY, spectrum=None, efficiency=None):
    """True photons/sr that a detector with ``efficiency`` records as ``detected``."""
    spectrum = default_emission_spectrum() if spectrum is None else spectrum
    efficiency = detection_efficiency() if efficiency is None else efficiency
    return detected / mean_efficiency(spectrum, efficiency)


@dataclass(frozen=True, eq=False)
class EmissionModel:
    """Ground-truth (efficiency-corrected) breakdown flash of one diode.

    Without an explicit intensity the model is calibrated so that a detector
    with the default efficiency curve records 39 photons/sr.
    """

    differential_intensity_true: float = None
    spectrum: SpectralCurve = field(default_factory=default_emission_spectrum)
    timing: BreakdownProfile = field(default_factory=BreakdownProfile)
    angular_model: str = "isotropic"

    def __post_init__(self):
        if self.differential_intensity_true is None:
            object.__setattr__(self, "differential_intensity_true", calibrated_true_intensity(spectrum=self.spectrum))
        if not np.isfinite(self.differential_intensity_true) or self.differential_intensity_true < 0:
            raise DomainError("differential_intensity_true must be >= 0")
        if self.angular_model != "isotropic":
            raise DomainError("only isotropic emission is modelled")
        spectrum = self.spectrum
        if spectrum.kind != DENSITY:
            spectrum = spectrum.with_kind(DENSITY)
        object.__setattr__(self, "spectrum", spectrum.normalized())
        object.__setattr__(self, "_inverse_cdf", _InverseCdf(self.spectrum))

    def mean_photons(self, solid_angle):
        _check_solid_angle(solid_angle)
        return self.differential_intensity_true * solid_angle

    def draw_wavelengths(self, rng, size):
        return self._inverse_cdf(rng.random(size))

    def draw_delays(self, rng, size):
        """Emission times relative to the breakdown timestamp (ns)."""
        t = self.timing
        return sample_emg(rng, size, t.decay_tau, t.jitter_sigma, t.onset_t0)


def sample_flash(model: EmissionModel, breakdown_time, solid_angle, rng):
    """Photons of one breakdown collected into ``solid_angle``.

    Returns an ``(n, 2)`` array of ``(emission_time_ns, wavelength_nm)`` rows.
    """
    n = rng.poisson(model.mean_photons(solid_angle))
    out = np.empty((n, 2))
    if n:
        out[:, 0] = breakdown_time + model.draw_delays(rng, n)
        out[:, 1] = model.draw_wavelengths(rng, n)
    return out


def sample_flash_counts(model: EmissionModel, n_breakdowns, solid_angle, rng):
    """Photon numbers for many breakdowns at once."""
    return rng.poisson(model.mean_photons(solid_angle), n_breakdowns)
