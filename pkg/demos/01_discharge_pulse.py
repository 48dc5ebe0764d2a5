"""
The discharge pulse of a passively quenched APD
===============================================

A breakdown dumps the charge stored on the diode's parasitic capacitance
through the avalanche.  The current is modelled as an exponential decay
smeared by Gaussian timing jitter (an exponentially modified Gaussian),
scaled to the total charge.
"""

# %%
# Canonical profile: 64 pC at 20 V overvoltage, τ = 2.75 ns, σ = 0.72 ns.
import numpy as np
from scipy import integrate

from apdflash.circuit import BreakdownProfile, discharge_current, parasitic_capacitance, peak_current
from apdflash.circuit import ALTERNATE_DECAY_TAU_NS

prof = BreakdownProfile()
print(prof)

# %%
# The parasitic capacitance follows from charge and overvoltage.
print(f"C_p = {parasitic_capacitance(prof.total_charge, prof.overvoltage):.2f} pF")

# %%
# Integrating the current gives back the charge (pC, since mA × ns = pC).
q, _ = integrate.quad(discharge_current, -10, 100, args=(prof,), points=[0.0], limit=200)
print(f"integral of I_D = {q:.6f} pC")

t_peak, i_peak = peak_current(prof)
print(f"peak current {i_peak:.2f} mA at t = {t_peak:.2f} ns (emission onset at {prof.onset_t0:g} ns)")

# %%
# The pulse figure quotes a slightly longer decay constant than the
# coincidence fit.  Compare both.
alt = BreakdownProfile(decay_tau=ALTERNATE_DECAY_TAU_NS)
t_alt, i_alt = peak_current(alt)
print(f"tau = {alt.decay_tau} ns: peak {i_alt:.2f} mA at {t_alt:.2f} ns")

# %%
# Two-column table for any plotting tool.
t = np.arange(-5.0, 25.0, 0.1)
table = np.column_stack([t, discharge_current(t, prof), discharge_current(t, alt)])
print("\n t_ns   I_mA(2.75)  I_mA(2.9)")
for row in table[::20]:
    print(f"{row[0]:5.1f}  {row[1]:9.3f}  {row[2]:9.3f}")
