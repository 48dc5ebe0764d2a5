"""Command-line entry points: simulate, analyze, spectrum, leakage."""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import leakage as lk
from .config import RunConfig, parse_range, provenance
from .simulation import (
    FACING, SPECTROMETER, ConfigError, EventFileError, read_events, simulate, simulate_scan, write_events,
)
from .spectra import (
    DENSITY, EFFICIENCY, SpectralCurveError, default_emission_spectrum, detected_spectrum, detection_efficiency,
    load_curve, save_curve,
)
from .spectrum import locate_features, normalize_spectrum, read_scan, write_scan
from .timing import (
    REVERSE_RATE_WINDOW_NS, FitError, LEFT, accidental_rate, build_histogram, differential_intensity, fit_emg_peak,
    net_coincidence_rate, read_metadata, response_corrected_intensity, write_histogram,
)


class UsageError(Exception):
    pass


def _range_arg(text):
    try:
        return parse_range(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_simulate(args):
    cfg = RunConfig.load(args.config)
    mode = args.mode or cfg.get("optics", "mode")
    detectors = cfg.detectors(mode)
    optics = cfg.optics(mode)
    header = provenance(cfg.checksum(), args.seed, mode=mode)
    if mode == SPECTROMETER:
        s = "spectrometer"
        duration = args.duration if args.duration is not None else cfg.number(s, "integration_time_s")
        wavelengths = cfg.scan_wavelengths()
        scan = simulate_scan(
            detectors, optics, wavelengths, duration, cfg.number(s, "coincidence_window_ns"), args.seed, args.jobs
        )
        write_scan(scan, args.out, header)
        n1 = np.mean([p.N_1 for p in scan]) / duration
        n2 = np.mean([p.N_2 for p in scan]) / duration
        print(f"scan points: {len(scan)}  ({wavelengths[0]:g}-{wavelengths[-1]:g} nm)")
        print(f"mean singles rates: r1 = {n1:.1f} cps, r2 = {n2:.1f} cps")
        return 0
    duration = args.duration if args.duration is not None else 10.0
    events = simulate(detectors, optics, duration, args.seed)
    write_events(events, args.out, header)
    r1, r2 = events.rate(1), events.rate(2)
    hist = build_histogram(events, t_range=cfg.range("analysis", "window_ns"),
                           bin_width=cfg.number("analysis", "bin_width_ns"))
    net = net_coincidence_rate(hist, cfg.range("analysis", "net_window_ns"))
    print(f"events: {len(events)}  duration: {duration:g} s")
    print(f"singles rates: r1 = {r1:.2f} cps, r2 = {r2:.2f} cps")
    print(f"pairs in {net.window[0]:g}..{net.window[1]:g} ns: {net.raw_counts} "
          f"(raw {net.raw_rate:.4g} /s, accidental expectation {net.accidental:.4g} /s)")
    print(f"net coincidence rate n_c = {net.rate:.4g} +- {net.error:.2g} /s")
    return 0


def cmd_analyze(args):
    events = read_events(args.events)
    in_meta = read_metadata(args.events)
    cfg = RunConfig.load(args.config)
    window = args.window or cfg.range("analysis", "window_ns")
    bin_width = args.bin if args.bin is not None else cfg.number("analysis", "bin_width_ns")
    solid_angle = args.solid_angle if args.solid_angle is not None else cfg.number("analysis", "solid_angle")
    hist = build_histogram(events, t_range=window, bin_width=bin_width)
    net = net_coincidence_rate(hist, cfg.range("analysis", "net_window_ns"))
    r1, r2 = hist.singles_rates
    dn = differential_intensity(net.rate, r1, solid_angle)
    dn_err = net.error / r1 / solid_angle
    n_acc_42 = accidental_rate(r1, r2, net.window[1] - net.window[0])
    corrected = None
    if hist.window[0] <= REVERSE_RATE_WINDOW_NS[0] and hist.window[1] >= REVERSE_RATE_WINDOW_NS[1]:
        reverse = net_coincidence_rate(hist, REVERSE_RATE_WINDOW_NS).rate
        try:
            corrected = response_corrected_intensity(
                net.rate, r1, r2, solid_angle, cfg.number("detector2", "dead_time_ns"), max(reverse, 0.0)
            )
        except ValueError:
            corrected = None
    meta = {
        "source": Path(args.events).name,
        "source_config_sha256": in_meta.get("config_sha256", "unknown"),
        "source_seed": in_meta.get("seed", "unknown"),
        "net_window_ns": f"{net.window[0]:g}:{net.window[1]:g}",
        "n_c_per_s": f"{net.rate:.6g}",
        "n_c_err_per_s": f"{net.error:.3g}",
        "n_acc_per_s": f"{n_acc_42:.6g}",
        "solid_angle_sr": f"{solid_angle:.6g}",
        "diff_intensity": f"{dn:.6g}",
        "diff_intensity_err": f"{dn_err:.3g}",
    }
    if corrected is not None:
        meta["diff_intensity_response_corrected"] = f"{corrected:.6g}"
    print(f"singles rates: r1 = {r1:.2f} cps, r2 = {r2:.2f} cps")
    print(f"n_c = {net.rate:.4g} +- {net.error:.2g} /s   n_acc = {n_acc_42:.4g} /s")
    print(f"dn_L/dOmega = {dn:.4g} +- {dn_err:.2g} photons/sr (detected)")
    if corrected is not None:
        print(f"dn_L/dOmega corrected for first-photon and dead-time response = {corrected:.4g} photons/sr")
    status = 0
    if args.fit:
        try:
            fit = fit_emg_peak(hist, LEFT)
        except FitError as exc:
            print(f"fit failed: {exc}", file=sys.stderr)
            status = 3
        else:
            meta.update({
                "fit_tau_ns": f"{fit.tau:.6g}", "fit_tau_err_ns": f"{fit.tau_err:.3g}",
                "fit_sigma_ns": f"{fit.sigma:.6g}", "fit_sigma_err_ns": f"{fit.sigma_err:.3g}",
                "fit_t0_ns": f"{fit.t0:.6g}", "fit_amplitude": f"{fit.amplitude:.6g}",
            })
            print(f"EMG fit (left peak): tau = {fit.tau:.4g} +- {fit.tau_err:.2g} ns, "
                  f"sigma = {fit.sigma:.4g} +- {fit.sigma_err:.2g} ns, t0 = {fit.t0:.4g} ns")
    header = provenance(cfg.checksum(), in_meta.get("seed"))
    write_histogram(hist, args.out, dict([h.split(" = ", 1) for h in header] + list(meta.items())))
    return status


def cmd_spectrum(args):
    scan = read_scan(args.scan)
    result = normalize_spectrum(scan, args.alpha)
    in_meta = read_metadata(args.scan)
    header = provenance(in_meta.get("config_sha256"), in_meta.get("seed"), alpha=f"{args.alpha:g}",
                        note="measured spectrum (includes detector efficiency and spectrometer bandpass)")
    if result.clamped.any():
        header.append("clamped_nm = " + " ".join(f"{w:g}" for w in result.wavelengths[result.clamped]))
    save_curve(result.curve, args.out, header, value_name="I")
    print(f"{len(result.curve)} points written to {args.out}")
    if result.excluded:
        print("excluded (N_1 = 0): " + " ".join(f"{p.wavelength:g}" for p in result.excluded))
    if result.clamped.any():
        print(f"{int(result.clamped.sum())} negative value(s) clamped to 0")
    if args.features:
        for f in locate_features(result.curve):
            print(f"{f.kind:8s} {f.wavelength:.1f} nm")
    return 0


def _diff_intensity(value):
    try:
        return float(value)
    except ValueError:
        pass
    meta = read_metadata(value)
    if "diff_intensity" not in meta:
        raise UsageError(f"{value}: no diff_intensity entry")
    return float(meta["diff_intensity"])


def cmd_leakage(args):
    cfg = RunConfig.load(args.config)
    eta = load_curve(args.eta, EFFICIENCY) if args.eta else detection_efficiency()
    if args.spectrum:
        spectrum = load_curve(args.spectrum, DENSITY)
    else:
        spectrum = detected_spectrum(default_emission_spectrum(), eta)
    wl_range = args.range or cfg.range("audit", "range_nm")
    transmission, name = None, "none"
    if args.filter:
        transmission = load_curve(args.filter, DENSITY)
        name = Path(args.filter).name
    wl = args.wavelength
    if wl is None:
        text = cfg.get("audit", "wavelength_um")
        wl = None if text == "mean" else cfg.number("audit", "wavelength_um")
    diameter = args.diameter if args.diameter is not None else cfg.number("detector1", "active_diameter_um")
    report = lk.audit(
        _diff_intensity(args.diff_intensity), diameter, spectrum, eta, wl_range, transmission, name, wl,
        cfg.number("audit", "published_brilliance"),
    )
    header = provenance(cfg.checksum())
    text = lk.format_report(report, header)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        csv_path = out.with_suffix(".csv") if out.suffix != ".csv" else out.with_name(out.stem + "_summary.csv")
        out.write_text(text)
        csv_path.write_text(lk.format_report_csv(report, header))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="apdflash", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate detector events (facing) or a spectrometer scan")
    s.add_argument("config", nargs="?", help="run configuration file (defaults: canonical setup)")
    s.add_argument("--duration", type=float, help="seconds (per scan point in spectrometer mode)")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--mode", choices=(FACING, SPECTROMETER))
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1, help="parallel scan points")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="coincidence histogram, EMG fit, n_c and dn/dOmega")
    a.add_argument("events")
    a.add_argument("--bin", type=float, help="bin width in ns")
    a.add_argument("--window", type=_range_arg, help="histogram range lo:hi in ns")
    a.add_argument("--out", required=True)
    a.add_argument("--fit", action="store_true")
    a.add_argument("--solid-angle", type=float, help="collection solid angle in sr")
    a.add_argument("--config")
    a.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("spectrum", help="normalised spectrum from a scan file")
    sp.add_argument("scan")
    sp.add_argument("--alpha", type=float, default=1e3)
    sp.add_argument("--out", required=True)
    sp.add_argument("--features", action="store_true")
    sp.set_defaults(func=cmd_spectrum)

    lkp = sub.add_parser("leakage", help="single-mode back-flash leakage audit")
    lkp.add_argument("--spectrum", help="measured spectrum I(lambda) (default: synthetic)")
    lkp.add_argument("--eta", help="detection efficiency curve (default: 0.55 x p_gen)")
    lkp.add_argument("--diff-intensity", default="39", help="photons/sr, or an analyze output file")
    lkp.add_argument("--diameter", type=float, help="active diameter in um")
    lkp.add_argument("--range", type=_range_arg, help="wavelength range lo:hi in nm")
    lkp.add_argument("--filter", help="filter transmission curve")
    lkp.add_argument("--wavelength", type=float, help="mode wavelength in um")
    lkp.add_argument("--out", help="report file; a .csv summary is written alongside")
    lkp.add_argument("--config")
    lkp.set_defaults(func=cmd_leakage)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EventFileError, SpectralCurveError, UsageError, ValueError, OSError) as exc:
        print(f"apdflash {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
