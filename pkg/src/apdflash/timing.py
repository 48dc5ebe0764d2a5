"""Coincidence timing analysis of two-detector event streams.

Time differences are taken as ``Δt = t1 - t2`` where ``t1`` already carries
the delay line.  Photons from a detector-1 flash therefore appear in a peak
left of the delay with its exponential tail pointing to smaller Δt; the
reverse process gives a peak right of the delay.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, signal

from .circuit import emg_cdf

DEFAULT_BIN_NS = 0.2
# the -40..+60 ns display window is too short to reach the 62 ns integration limit
DEFAULT_WINDOW_NS = (-40.0, 140.0)
NET_RATE_WINDOW_NS = (20.0, 62.0)
# the same window mirrored about the 63 ns delay: detector-2 flashes seen by detector 1
REVERSE_RATE_WINDOW_NS = (64.0, 106.0)

LEFT = "left"
RIGHT = "right"


class UnsortedEventsError(ValueError):
    pass


class FitError(RuntimeError):
    """Raised when a peak fit cannot be carried out or does not converge.

    ``best`` holds the last iterate when the optimiser ran out of iterations.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(eq=False)
class CoincidenceHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    window: tuple
    total_time: float
    singles_rates: tuple

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        # real-valued expected counts are kept as floats (noiseless model histograms)
        if counts.dtype.kind == "f" and np.any(counts != np.round(counts)):
            self.counts = counts.astype(float)
        else:
            self.counts = counts.astype(np.int64)
        if self.counts.size != self.bin_edges.size - 1:
            raise ValueError("len(counts) must equal len(bin_edges) - 1")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy t_min < t_max")

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    def select(self, lo, hi):
        """Mask of bins whose centres lie in ``[lo, hi]``."""
        c = self.centers
        return (c >= lo) & (c <= hi)


def _check_sorted(events):
    if np.any(np.diff(events.timestamp) < 0):
        i = int(np.argmax(np.diff(events.timestamp) < 0)) + 1
        raise UnsortedEventsError(f"event stream is not time-ordered (first violation at index {i})")


def _pair_differences(t1, t2, lo, hi):
    """All ``t1[i] - t2[j]`` lying in ``[lo, hi]``; both inputs sorted."""
    start = np.searchsorted(t2, t1 - hi, side="left")
    stop = np.searchsorted(t2, t1 - lo, side="right")
    n = stop - start
    total = int(n.sum())
    if total == 0:
        return np.empty(0)
    first = np.repeat(start - (np.cumsum(n) - n), n)
    j = first + np.arange(total)
    return np.repeat(t1, n) - t2[j]


def _edges(t_range, bin_width):
    t_min, t_max = map(float, t_range)
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    if not t_min < t_max:
        raise ValueError("t_range must be nonempty")
    n = int(np.ceil((t_max - t_min) / bin_width - 1e-9))
    return t_min + bin_width * np.arange(n + 1)


def build_histogram(events, pair_window=None, t_range=DEFAULT_WINDOW_NS, bin_width=DEFAULT_BIN_NS, detector_ids=(1, 2)):
    """Histogram of ``t1 - t2`` over all detector-1/detector-2 pairs.

    Every pair with ``|t1 - t2| <= pair_window`` is counted once and binned
    if it falls inside ``t_range``.  ``pair_window`` defaults to the largest
    ``|Δt|`` the range can hold.  Singles rates come from the full stream.
    """
    _check_sorted(events)
    edges = _edges(t_range, bin_width)
    if pair_window is None:
        pair_window = max(abs(edges[0]), abs(edges[-1]))
    id1, id2 = detector_ids
    t1 = events.times(id1)
    t2 = events.times(id2)
    lo = max(-pair_window, edges[0])
    hi = min(pair_window, edges[-1])
    dt = _pair_differences(t1, t2, lo, hi) if hi >= lo else np.empty(0)
    counts, _ = np.histogram(dt, edges)
    rates = (t1.size / events.duration, t2.size / events.duration)
    return CoincidenceHistogram(edges, counts, (float(edges[0]), float(edges[-1])), events.duration, rates)


def count_window_pairs(events, window, delay=0.0, detector_ids=(1, 2)):
    """Number of detector-2 events within ``window`` ns after each detector-1 breakdown.

    ``delay`` is the delay-line shift already present on detector 1's
    timestamps; it is removed before pairing.
    """
    _check_sorted(events)
    id1, id2 = detector_ids
    t1 = events.times(id1) - delay
    t2 = events.times(id2)
    return int(np.sum(np.searchsorted(t2, t1 + window, "left") - np.searchsorted(t2, t1, "left")))


def accidental_rate(r1, r2, window):
    """Rate of chance coincidences ``r1 * r2 * window`` (rates in 1/s, window in ns)."""
    if r1 < 0 or r2 < 0 or window < 0:
        raise ValueError("rates and window must be >= 0")
    return r1 * r2 * window * 1e-9


def differential_intensity(coincidence_rate, breakdown_rate, solid_angle):
    """Detected photons per steradian per breakdown.

    ``coincidence_rate`` must already have accidentals subtracted.
    """
    if not breakdown_rate > 0:
        raise ValueError("breakdown_rate must be > 0")
    if not solid_angle > 0:
        raise ValueError("solid_angle must be > 0")
    return coincidence_rate / breakdown_rate / solid_angle


def response_corrected_intensity(coincidence_rate, breakdown_rate, partner_rate, solid_angle,
                                 partner_dead_time=1000.0, reverse_rate=0.0):
    """Detected photons/sr per breakdown, inverting the two-detector response.

    :func:`differential_intensity` assumes every collected photon is
    counted.  Here the partner detector counts at most the first photon of a
    flash and only while live, and breakdowns of detector 1 induced by the
    partner's own flash (``reverse_rate``) find the partner dead:

        n_c = (r1 - n_rev) * (1 - r2 * dead) * (1 - exp(-dn/dOmega * Omega))
    """
    if not solid_angle > 0:
        raise ValueError("solid_angle must be > 0")
    emitters = (breakdown_rate - reverse_rate) * (1.0 - partner_rate * partner_dead_time * 1e-9)
    if not emitters > 0:
        raise ValueError("no live breakdowns left after the corrections")
    p = coincidence_rate / emitters
    if p >= 1:
        raise ValueError("coincidence rate exceeds the live breakdown rate")
    return -np.log1p(-p) / solid_angle


@dataclass
class NetRate:
    rate: float
    error: float
    raw_rate: float
    accidental: float
    raw_counts: int
    window: tuple


def net_coincidence_rate(hist, window=NET_RATE_WINDOW_NS):
    """Raw pair rate in ``window`` minus the accidental rate for that width."""
    mask = hist.select(*window)
    if not mask.any():
        raise ValueError(f"histogram does not cover {window}")
    raw = hist.counts[mask].sum().item()
    width = mask.sum() * hist.bin_width
    acc = accidental_rate(*hist.singles_rates, width)
    raw_rate = raw / hist.total_time
    return NetRate(raw_rate - acc, np.sqrt(raw) / hist.total_time, raw_rate, acc, raw, tuple(window))


@dataclass
class EmgFit:
    tau: float
    sigma: float
    t0: float
    amplitude: float
    background: float
    tau_err: float = np.nan
    sigma_err: float = np.nan
    t0_err: float = np.nan
    amplitude_err: float = np.nan
    covariance: np.ndarray = field(default=None, repr=False)
    side: str = RIGHT
    region: tuple = None
    iterations: int = 0
    chi2: float = np.nan
    dof: int = 0


def _smooth(y, n=5):
    return np.convolve(y, np.ones(n) / n, mode="same")


def _peak_region(x, c, tail_span, rise_span):
    """Region around the last significant peak, in tail-right coordinates."""
    s = _smooth(c.astype(float))
    prominence = max(3.0, 0.2 * s.max())
    peaks, _ = signal.find_peaks(s, prominence=prominence)
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(s))])
    p = peaks[-1]
    xp = x[p]
    lo, hi = xp - rise_span, xp + tail_span
    for q in peaks:
        if q == p:
            continue
        mid = 0.5 * (x[q] + xp)
        if x[q] < xp:
            lo = max(lo, mid)
        else:
            hi = min(hi, mid)
    return lo, hi


def _initial_guess(edges, c):
    x = 0.5 * (edges[:-1] + edges[1:])
    bw = edges[1] - edges[0]
    cf = c.astype(float)
    ip = int(np.argmax(_smooth(cf, 3)))
    k = max(3, min(10, c.size // 10))
    background = max(0.0, min(cf[:k].mean(), cf[-k:].mean()))
    peak = max(cf[ip] - background, 1.0)

    after = slice(ip + 1, min(ip + 11, c.size))
    y = cf[after] - background
    ok = y > 0
    tau = np.nan
    if ok.sum() >= 3:
        slope = np.polyfit(x[after][ok], np.log(y[ok]), 1)[0]
        if slope < 0:
            tau = -1.0 / slope
    span = edges[-1] - edges[0]
    if not np.isfinite(tau):
        tau = span / 10
    tau = float(np.clip(tau, bw, span))

    rise = cf[: ip + 1] - background
    below10 = np.nonzero(rise < 0.1 * peak)[0]
    below90 = np.nonzero(rise < 0.9 * peak)[0]
    if below10.size and below90.size:
        sigma = (x[below90[-1]] - x[below10[-1]]) / 2.563
    else:
        sigma = bw
    sigma = float(np.clip(sigma, bw / 4, span / 4))

    amplitude = max(cf.sum() - background * c.size, 1.0)
    return np.array([amplitude, x[ip], tau, sigma, background])


def _model(p, edges):
    amplitude, t0, tau, sigma, background = p
    return amplitude * np.diff(emg_cdf(edges, tau, sigma, t0)) + background


def fit_emg_peak(hist, peak_side=LEFT, region=None, tail_span=25.0, rise_span=5.0, max_iter=200, xtol=1e-8):
    """Weighted least-squares EMG + flat background fit of one coincidence peak.

    ``peak_side="left"`` selects the detector-1 flash peak (tail towards
    smaller Δt), ``"right"`` the reverse process.  Bins are weighted with
    variance ``max(count, 1)``; the model integrates the EMG over each bin.
    ``t0`` of the result is the onset in Δt coordinates.
    """
    if peak_side not in (LEFT, RIGHT):
        raise ValueError("peak_side must be 'left' or 'right'")
    edges = hist.bin_edges
    counts = hist.counts
    # work in coordinates where the tail extends to the right
    if peak_side == LEFT:
        u_edges = -edges[::-1]
        u_counts = counts[::-1]
    else:
        u_edges = edges
        u_counts = counts
    u_centers = 0.5 * (u_edges[:-1] + u_edges[1:])
    if region is None:
        # the chosen peak is the last one in these coordinates for either side
        lo, hi = _peak_region(u_centers, u_counts, tail_span, rise_span)
    else:
        lo, hi = (-region[1], -region[0]) if peak_side == LEFT else region
    sel = np.nonzero((u_centers >= lo) & (u_centers <= hi))[0]
    if sel.size < 6:
        raise FitError("peak region holds too few bins")
    c = u_counts[sel]
    if c.sum() == 0:
        raise FitError("peak region is empty")
    if c.sum() < 50:
        raise FitError(f"peak region holds only {c.sum()} counts (need >= 50)")
    e = u_edges[sel[0] : sel[-1] + 2]
    ref = 0.5 * (e[0] + e[-1])
    e = e - ref
    w = 1.0 / np.sqrt(np.maximum(c, 1))

    def resid(p):
        return (_model(p, e) - c) * w

    p0 = _initial_guess(e, c)
    lower = [0.0, -np.inf, 1e-9, 0.0, 0.0]
    upper = [np.inf, np.inf, np.inf, np.inf, np.inf]
    p0[3] = max(p0[3], 1e-6)
    res = optimize.least_squares(
        resid, p0, bounds=(lower, upper), method="trf", jac="3-point",
        x_scale="jac", xtol=xtol, ftol=None, gtol=None, max_nfev=max_iter,
    )
    p = res.x
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(J.T @ J)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    t0 = p[1] + ref
    reg = (lo, hi)
    if peak_side == LEFT:
        t0 = -t0
        reg = (-hi, -lo)
    fit = EmgFit(
        tau=float(p[2]), sigma=float(p[3]), t0=float(t0), amplitude=float(p[0]), background=float(p[4]),
        tau_err=float(err[2]), sigma_err=float(err[3]), t0_err=float(err[1]), amplitude_err=float(err[0]),
        covariance=cov, side=peak_side, region=reg, iterations=int(res.nfev),
        chi2=float(np.sum(res.fun ** 2)), dof=int(c.size - 5),
    )
    if res.status <= 0:
        raise FitError(f"EMG fit did not converge: {res.message}", best=fit)
    return fit


def peak_rate(fit, hist, window=NET_RATE_WINDOW_NS):
    """Rate of the fitted EMG peak (background removed) inside ``window``."""
    lo, hi = window
    if fit.side == LEFT:
        a, b = -hi, -lo
        frac = emg_cdf(b, fit.tau, fit.sigma, -fit.t0) - emg_cdf(a, fit.tau, fit.sigma, -fit.t0)
    else:
        frac = emg_cdf(hi, fit.tau, fit.sigma, fit.t0) - emg_cdf(lo, fit.tau, fit.sigma, fit.t0)
    return fit.amplitude * frac / hist.total_time


def format_histogram(hist, meta=None):
    lines = [
        f"# window_ns = {hist.window[0]:.6g}:{hist.window[1]:.6g}",
        f"# bin_width_ns = {hist.bin_width:.6g}",
        f"# total_time_s = {hist.total_time:.9g}",
        f"# r1_cps = {hist.singles_rates[0]:.9g}",
        f"# r2_cps = {hist.singles_rates[1]:.9g}",
    ]
    for key, value in (meta or {}).items():
        lines.append(f"# {key} = {value}")
    lines.append("bin_start_ns,count")
    lines += [f"{a:.6f},{n}" for a, n in zip(hist.bin_edges[:-1], hist.counts)]
    return "\n".join(lines) + "\n"


def write_histogram(hist, path, meta=None):
    Path(path).write_text(format_histogram(hist, meta))


def read_metadata(path):
    """``# key = value`` lines of an output file as a dict of strings."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                continue
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


def read_histogram(path):
    meta = read_metadata(path)
    starts, counts = [], []
    header_seen = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if not header_seen:
                header_seen = True
                continue
            a, n = text.split(",")
            starts.append(float(a))
            counts.append(int(n))
    try:
        w_lo, w_hi = (float(v) for v in meta["window_ns"].split(":"))
        bw = float(meta["bin_width_ns"])
        hist = CoincidenceHistogram(
            np.append(starts, starts[-1] + bw), counts, (w_lo, w_hi), float(meta["total_time_s"]),
            (float(meta["r1_cps"]), float(meta["r2_cps"])),
        )
    except (KeyError, IndexError) as exc:
        raise ValueError(f"{path}: incomplete histogram metadata ({exc})") from None
    return hist, meta
