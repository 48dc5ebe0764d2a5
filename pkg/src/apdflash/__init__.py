"""Breakdown-flash photoemission of Geiger-mode silicon APDs.

Monte Carlo of two detectors exchanging breakdown flashes, plus the analysis
chain that turns their event streams into emission intensity, timing shape,
spectrum and a quantum-channel leakage budget.
"""

__version__ = "0.1.0"

from .circuit import BreakdownProfile, discharge_current, emg_density, parasitic_capacitance, peak_current
from .emission import EmissionModel, sample_flash, spectrum_cdf_inverse
from .leakage import (
    beta_correction, brilliance, corrected_leakage, filtered_leakage, gaussian_mode_etendue,
    single_mode_coupling,
)
from .simulation import DetectorConfig, EventRecord, EventStream, OpticsConfig, grating_transmission, simulate
from .spectra import SpectralCurve
from .spectrum import SpectralScanPoint, expected_spectrum, locate_features, normalize_spectrum
from .timing import (
    CoincidenceHistogram, EmgFit, accidental_rate, build_histogram, differential_intensity, fit_emg_peak,
    net_coincidence_rate, response_corrected_intensity,
)
