"""Passive-quench discharge pulse of a Geiger-mode APD.

The current pulse and the flash-photon timing share one shape: a one-sided
exponential decay convolved with a Gaussian (the exponentially modified
Gaussian, EMG).  Units throughout: ns, pC, pF, V, mA (pC/ns == mA).
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

# canonical passive-quench values of the C30902 diodes
TOTAL_CHARGE_PC = 64.0
DECAY_TAU_NS = 2.75
# decay constant quoted for the raw coincidence histogram; kept as an alternate
ALTERNATE_DECAY_TAU_NS = 2.9
JITTER_SIGMA_NS = 0.72
OVERVOLTAGE_V = 20.0
# lag of the emission onset behind the breakdown timestamp
ONSET_NS = 6.0


class InvalidProfileError(ValueError):
    pass


@dataclass(frozen=True)
class BreakdownProfile:
    """Shape and size of one avalanche discharge."""

    total_charge: float = TOTAL_CHARGE_PC
    decay_tau: float = DECAY_TAU_NS
    jitter_sigma: float = JITTER_SIGMA_NS
    onset_t0: float = ONSET_NS
    overvoltage: float = OVERVOLTAGE_V

    def __post_init__(self):
        if not np.isfinite(self.decay_tau) or self.decay_tau <= 0:
            raise InvalidProfileError(f"decay_tau must be > 0, got {self.decay_tau}")
        if not np.isfinite(self.jitter_sigma) or self.jitter_sigma < 0:
            raise InvalidProfileError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if not np.isfinite(self.total_charge) or self.total_charge < 0:
            raise InvalidProfileError(f"total_charge must be >= 0, got {self.total_charge}")
        if not np.isfinite(self.overvoltage) or self.overvoltage <= 0:
            raise InvalidProfileError(f"overvoltage must be > 0, got {self.overvoltage}")
        if not np.isfinite(self.onset_t0):
            raise InvalidProfileError("onset_t0 must be finite")


def _check_shape(tau, sigma):
    if not tau > 0:
        raise InvalidProfileError(f"tau must be > 0, got {tau}")
    if not sigma >= 0:
        raise InvalidProfileError(f"sigma must be >= 0, got {sigma}")


def _shaped(out, t):
    return out.reshape(np.shape(t)) if np.ndim(t) else float(out[0])


def emg_pdf(t, tau, sigma, t0=0.0):
    """EMG probability density in 1/ns, evaluated without overflow.

    Uses ``erfcx`` where the complementary error function argument is
    positive; the remaining branch has a non-positive exponent.
    """
    _check_shape(tau, sigma)
    x = np.atleast_1d(np.asarray(t, dtype=float) - t0)
    if sigma == 0:
        out = np.where(x >= 0, np.exp(-np.maximum(x, 0.0) / tau) / tau, 0.0)
        return _shaped(out, t)
    # overflow for sigma -> 0 only ever feeds exp(-inf) = 0
    with np.errstate(over="ignore", divide="ignore"):
        z = (sigma / tau - x / sigma) / np.sqrt(2.0)
        out = np.empty_like(z)
        pos = z > 0
        out[pos] = 0.5 / tau * np.exp(-0.5 * (x[pos] / sigma) ** 2) * special.erfcx(z[pos])
        neg = ~pos
        out[neg] = 0.5 / tau * np.exp(0.5 * (sigma / tau) ** 2 - x[neg] / tau) * special.erfc(z[neg])
    return _shaped(out, t)


def emg_cdf(t, tau, sigma, t0=0.0):
    """Cumulative distribution of :func:`emg_pdf`."""
    _check_shape(tau, sigma)
    x = np.atleast_1d(np.asarray(t, dtype=float) - t0)
    if sigma == 0:
        return _shaped(np.where(x >= 0, -np.expm1(-np.maximum(x, 0.0) / tau), 0.0), t)
    with np.errstate(over="ignore", divide="ignore"):
        z = (sigma / tau - x / sigma) / np.sqrt(2.0)
        tail = np.empty_like(z)
        pos = z > 0
        tail[pos] = 0.5 * np.exp(-0.5 * (x[pos] / sigma) ** 2) * special.erfcx(z[pos])
        neg = ~pos
        tail[neg] = 0.5 * np.exp(0.5 * (sigma / tau) ** 2 - x[neg] / tau) * special.erfc(z[neg])
        out = special.ndtr(x / sigma) - tail
    return _shaped(np.clip(out, 0.0, 1.0), t)


def emg_density(t, profile: BreakdownProfile):
    """Normalised time density of the discharge (1/ns)."""
    return emg_pdf(t, profile.decay_tau, profile.jitter_sigma, profile.onset_t0)


def discharge_current(t, profile: BreakdownProfile):
    """Discharge current I_D(t) in mA; integrates to ``total_charge`` pC."""
    return profile.total_charge * emg_density(t, profile)


def peak_current(profile: BreakdownProfile):
    """Return ``(t_peak, I_peak)`` of the discharge pulse."""
    tau, sigma, t0 = profile.decay_tau, profile.jitter_sigma, profile.onset_t0
    if sigma == 0:
        return t0, profile.total_charge / tau
    res = optimize.minimize_scalar(
        lambda t: -emg_density(t, profile),
        bracket=(t0 - sigma, t0 + min(sigma, tau), t0 + 3 * sigma + tau),
        tol=1e-12,
    )
    return float(res.x), float(discharge_current(res.x, profile))


def parasitic_capacitance(total_charge, overvoltage):
    """C_p = Q_D / ΔV in pF, assuming C_p supplies the whole discharge."""
    if not overvoltage > 0:
        raise ValueError(f"overvoltage must be > 0, got {overvoltage}")
    return total_charge / overvoltage


def sample_emg(rng, size, tau, sigma, t0=0.0):
    """Draw EMG-distributed times as onset + exponential + Gaussian jitter."""
    _check_shape(tau, sigma)
    out = rng.exponential(tau, size)
    if sigma > 0:
        out += rng.normal(0.0, sigma, size)
    return out + t0
