"""Tabulated spectral curves (emission densities, efficiencies, filters).

File format: two comma-separated columns ``wavelength_nm,value`` with a
header line.  Lines starting with ``#`` are comments.
"""

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

# photoelectron detection probability of the C30902 at 20 V overvoltage
PHOTOELECTRON_EFFICIENCY = 0.55

DENSITY = "density"
EFFICIENCY = "efficiency"


class SpectralCurveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralCurve:
    """Piecewise-linear nonnegative function of wavelength.

    ``kind`` controls evaluation outside the sampled range: a ``"density"``
    curve is zero there, an ``"efficiency"`` curve raises.
    """

    wavelengths: np.ndarray
    values: np.ndarray
    kind: str = DENSITY

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if lam.ndim != 1 or lam.shape != val.shape:
            raise SpectralCurveError("wavelengths and values must be 1-D arrays of equal length")
        if lam.size < 2:
            raise SpectralCurveError("a spectral curve needs at least 2 samples")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(val))):
            raise SpectralCurveError("non-finite sample")
        if np.any(np.diff(lam) <= 0):
            raise SpectralCurveError("wavelengths must be strictly increasing")
        if np.any(val < 0):
            raise SpectralCurveError("values must be >= 0")
        if self.kind not in (DENSITY, EFFICIENCY):
            raise SpectralCurveError(f"unknown curve kind {self.kind!r}")
        if self.kind == EFFICIENCY and np.any(val > 1):
            raise SpectralCurveError("efficiency values must lie in [0, 1]")
        lam.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "wavelengths", lam)
        object.__setattr__(self, "values", val)

    @property
    def support(self):
        return float(self.wavelengths[0]), float(self.wavelengths[-1])

    def __len__(self):
        return self.wavelengths.size

    def __call__(self, wavelength):
        lam = np.asarray(wavelength, dtype=float)
        if self.kind == EFFICIENCY:
            lo, hi = self.support
            if np.any(lam < lo) or np.any(lam > hi):
                raise SpectralCurveError(
                    f"efficiency curve covers {lo:g}-{hi:g} nm, queried outside that range"
                )
        return np.interp(lam, self.wavelengths, self.values, left=0.0, right=0.0)

    def integral(self, lo=None, hi=None):
        """Exact integral of the piecewise-linear curve over ``[lo, hi]``."""
        a, b = self.support
        lo = a if lo is None else max(lo, a)
        hi = b if hi is None else min(hi, b)
        if hi <= lo:
            return 0.0
        inside = (self.wavelengths > lo) & (self.wavelengths < hi)
        grid = np.concatenate(([lo], self.wavelengths[inside], [hi]))
        return float(np.trapezoid(self(grid), grid))

    def scaled(self, factor):
        return SpectralCurve(self.wavelengths, self.values * factor, self.kind)

    def normalized(self):
        """Copy scaled to unit integral."""
        total = self.integral()
        if total <= 0:
            raise SpectralCurveError("cannot normalise a curve with zero integral")
        return self.scaled(1.0 / total)

    def with_kind(self, kind):
        return SpectralCurve(self.wavelengths, self.values, kind)


def load_curve(path, kind=DENSITY):
    path = Path(path)
    rows = []
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
            if len(parts) != 2:
                raise SpectralCurveError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise SpectralCurveError(f"{path}:{lineno}: non-numeric value") from None
            if len(rows) > 1 and rows[-1][0] <= rows[-2][0]:
                raise SpectralCurveError(f"{path}:{lineno}: wavelengths must be strictly increasing")
    if not header_seen:
        raise SpectralCurveError(f"{path}: missing header line")
    if len(rows) < 2:
        raise SpectralCurveError(f"{path}: needs at least 2 samples")
    lam, val = np.array(rows).T
    return SpectralCurve(lam, val, kind)


def format_curve(curve, header_lines=(), value_name="value"):
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"wavelength_nm,{value_name}")
    lines += [f"{lam:.4f},{v:.9g}" for lam, v in zip(curve.wavelengths, curve.values)]
    return "\n".join(lines) + "\n"


def save_curve(curve, path, header_lines=(), value_name="value"):
    Path(path).write_text(format_curve(curve, header_lines, value_name))


def _data_file(name):
    return resources.files("apdflash") / "data" / name


def default_emission_spectrum():
    """Synthetic breakdown-flash emission density (true, before detection).

    Stand-in with the qualitative features only; heights are not measured.
    """
    with resources.as_file(_data_file("synthetic_emission_spectrum.csv")) as p:
        return load_curve(p, DENSITY)


def default_generation_probability():
    """Photoelectron generation probability of the detecting diode."""
    with resources.as_file(_data_file("generation_probability.csv")) as p:
        return load_curve(p, EFFICIENCY)


def detection_efficiency(generation=None, photoelectron_efficiency=PHOTOELECTRON_EFFICIENCY):
    """Total detection efficiency η(λ) = p_gen(λ) × photoelectron efficiency."""
    if generation is None:
        generation = default_generation_probability()
    if not 0 <= photoelectron_efficiency <= 1:
        raise SpectralCurveError("photoelectron efficiency must lie in [0, 1]")
    return SpectralCurve(generation.wavelengths, generation.values * photoelectron_efficiency, EFFICIENCY)


def detected_spectrum(emission, efficiency, step=1.0):
    """Emission density weighted by η(λ), as a detector would record it (unnormalised)."""
    lo, hi = emission.support
    grid = np.union1d(np.arange(lo, hi + 0.5 * step, step), emission.wavelengths)
    grid = grid[(grid >= lo) & (grid <= hi)]
    return SpectralCurve(grid, emission(grid) * efficiency(grid), DENSITY)
