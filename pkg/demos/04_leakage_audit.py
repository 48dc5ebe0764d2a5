"""
How much flash light leaks back into a quantum channel?
=======================================================

A receiver diode that fires emits a flash; part of it couples back into the
single-mode channel it listens on.  The chain runs from the detected
differential intensity to brilliance, then to photons per spatial mode, and
finally to emitted photons by undoing the detector's efficiency.
"""

# %%
import numpy as np

from apdflash import leakage as lk
from apdflash.spectra import SpectralCurve, default_emission_spectrum, detected_spectrum, detection_efficiency

eta = detection_efficiency()
measured = detected_spectrum(default_emission_spectrum(), eta)

# %%
# Brilliance from 39 photons/sr over a 500 µm diameter active area, next to
# the published value.  They differ by a factor of ten.
b_fp = lk.brilliance(39.0, 500.0)
print(f"B first principles = {b_fp:.3e}, published = {lk.PUBLISHED_BRILLIANCE:.1e} photons/(sr um^2)")

# %%
# One Gaussian mode has étendue λ²/4 in the closed form; integrating the
# printed expression literally gives λ²/(8π).
lam = lk.PUBLISHED_WAVELENGTH_UM
et = lk.gaussian_mode_etendue(5.0, lam / (np.pi * 5.0))
print(f"closed form {et.closed_form:.4f}, quadrature {et.quadrature:.4f} um^2 sr, ratio {et.ratio:.4f}")

# %%
# Published chain: N_r = B λ²/4, then β from the measured spectrum.
beta = lk.beta_correction(measured, eta)
n_r = lk.single_mode_coupling(lk.PUBLISHED_BRILLIANCE, lam)
print(f"N_r = {n_r:.3e}, beta = {beta:.2f}, N_r_corr = {lk.corrected_leakage(n_r, beta):.3e} photons/breakdown")

# %%
# Spectral filtering: a 1000 nm longpass blocks almost everything, while a
# 10 nm bandpass at 850 nm still passes a few percent.
longpass = SpectralCurve([700.0, 999.9, 1000.0, 1050.0], [0.0, 0.0, 1.0, 1.0])
bandpass = SpectralCurve([700.0, 845.0, 845.01, 854.99, 855.0, 1050.0], [0, 0, 1, 1, 0, 0])
total = lk.corrected_leakage(n_r, beta)
for name, t in (("longpass 1000 nm", longpass), ("bandpass 850/10 nm", bandpass)):
    print(f"{name:20s}: {lk.filtered_leakage(measured, eta, t, total):.3e}")

# %%
# The full report, as the command-line tool prints it.
print(lk.format_report(lk.audit(39.0, 500.0, measured, eta, wavelength_um=lam)))
