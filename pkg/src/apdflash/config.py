"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Every default reproduces the canonical passive-quench C30902 setup.  Unknown
sections or keys are rejected; physical values are validated by the objects
they build.
"""

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import BreakdownProfile
from .emission import EmissionModel, calibrated_true_intensity
from .spectra import EFFICIENCY, default_emission_spectrum, default_generation_probability, detection_efficiency, load_curve
from .simulation import (
    FACING, SPECTROMETER, ConfigError, DetectorConfig, OpticsConfig,
)

DEFAULTS = {
    "detector1": {
        "dark_rate": "500",
        # 500 cps dark + ambient light -> 2634 cps
        "ambient_rate": "2134",
        "dead_time_ns": "1000",
        "active_diameter_um": "500",
        "photoelectron_efficiency": "0.55",
        "generation_curve": "default",
    },
    "detector2": {
        "dark_rate": "500",
        # 731 cps observed, of which ~48 cps are flash coincidences
        "ambient_rate": "183",
        "dead_time_ns": "1000",
        "active_diameter_um": "500",
        "photoelectron_efficiency": "0.55",
        "generation_curve": "default",
    },
    "emission": {
        "spectrum": "default",
        "detected_intensity": "39",
        "true_intensity": "auto",
        "total_charge_pc": "64",
        "decay_tau_ns": "2.75",
        "jitter_sigma_ns": "0.72",
        "onset_ns": "6",
        "overvoltage_v": "20",
    },
    "optics": {
        "mode": FACING,
        "solid_angle_1to2": "4.67e-4",
        "solid_angle_2to1": "4.67e-4",
        "delay_line_ns": "63",
        "coupling_efficiency": "1",
        "grating_center_nm": "860",
        "grating_fwhm_nm": "3.3",
    },
    "spectrometer": {
        "solid_angle": "0.0218",
        "coupling_efficiency": "0.025",
        "detector1_ambient_rate": "17500",
        "detector2_ambient_rate": "5000",
        "scan_start_nm": "700",
        "scan_stop_nm": "1000",
        "scan_step_nm": "5",
        "integration_time_s": "50",
        "coincidence_window_ns": "70",
    },
    "analysis": {
        "bin_width_ns": "0.2",
        "window_ns": "-40:140",
        "net_window_ns": "20:62",
        "solid_angle": "4.67e-4",
        "alpha": "1000",
    },
    "audit": {
        "range_nm": "700:1050",
        "wavelength_um": "0.849",
        "published_brilliance": "2e-3",
    },
}


def parse_range(text):
    """``"a:b"`` -> ``(a, b)`` floats."""
    try:
        a, b = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"expected 'lo:hi', got {text!r}") from None
    if not b > a:
        raise ConfigError(f"empty range {text!r}")
    return a, b


@dataclass
class RunConfig:
    values: dict
    source: str = "<defaults>"

    @classmethod
    def load(cls, path=None):
        values = {s: dict(kv) for s, kv in DEFAULTS.items()}
        source = "<defaults>"
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
            parser.optionxform = str
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"{path}: {exc}") from None
            for section in parser.sections():
                if section not in values:
                    raise ConfigError(f"{path}: unknown section [{section}]")
                for key, value in parser.items(section):
                    if key not in values[section]:
                        raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                    values[section][key] = value.strip()
            source = str(path)
        cfg = cls(values, source)
        cfg.detectors(FACING)
        cfg.detectors(SPECTROMETER)
        cfg.optics()
        return cfg

    def get(self, section, key):
        return self.values[section][key]

    def number(self, section, key):
        text = self.values[section][key]
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: not a number: {text!r}") from None
        if not np.isfinite(value):
            raise ConfigError(f"[{section}] {key}: must be finite")
        return value

    def range(self, section, key):
        return parse_range(self.values[section][key])

    def checksum(self):
        text = "\n".join(f"{s}.{k}={v}" for s in sorted(self.values) for k, v in sorted(self.values[s].items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def _curve(self, section, key, kind, default):
        ref = self.values[section][key]
        if ref == "default":
            return default()
        try:
            return load_curve(ref, kind)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None

    def profile(self):
        e = "emission"
        try:
            return BreakdownProfile(
                total_charge=self.number(e, "total_charge_pc"),
                decay_tau=self.number(e, "decay_tau_ns"),
                jitter_sigma=self.number(e, "jitter_sigma_ns"),
                onset_t0=self.number(e, "onset_ns"),
                overvoltage=self.number(e, "overvoltage_v"),
            )
        except ValueError as exc:
            raise ConfigError(f"[emission] {exc}") from None

    def efficiency(self, section):
        gen = self._curve(section, "generation_curve", EFFICIENCY, default_generation_probability)
        try:
            return detection_efficiency(gen, self.number(section, "photoelectron_efficiency"))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None

    def emission(self):
        spectrum = self._curve("emission", "spectrum", "density", default_emission_spectrum)
        true = self.values["emission"]["true_intensity"]
        try:
            if true == "auto":
                intensity = calibrated_true_intensity(
                    self.number("emission", "detected_intensity"), spectrum, self.efficiency("detector2")
                )
            else:
                intensity = self.number("emission", "true_intensity")
            return EmissionModel(intensity, spectrum, self.profile())
        except ValueError as exc:
            raise ConfigError(f"[emission] {exc}") from None

    def detectors(self, mode=None):
        mode = mode or self.values["optics"]["mode"]
        emission = self.emission()
        out = []
        for i, section in ((1, "detector1"), (2, "detector2")):
            ambient = self.number(section, "ambient_rate")
            if mode == SPECTROMETER:
                ambient = self.number("spectrometer", f"detector{i}_ambient_rate")
            try:
                out.append(DetectorConfig(
                    id=i,
                    dark_rate=self.number(section, "dark_rate"),
                    ambient_rate=ambient,
                    dead_time=self.number(section, "dead_time_ns"),
                    efficiency=self.efficiency(section),
                    active_diameter=self.number(section, "active_diameter_um"),
                    breakdown_profile=emission.timing,
                    emission=emission,
                ))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {exc}") from None
        return out

    def optics(self, mode=None):
        o = "optics"
        mode = mode or self.values[o]["mode"]
        params = dict(
            mode=mode,
            solid_angle_1to2=self.number(o, "solid_angle_1to2"),
            solid_angle_2to1=self.number(o, "solid_angle_2to1"),
            delay_line=self.number(o, "delay_line_ns"),
            coupling_efficiency=self.number(o, "coupling_efficiency"),
            grating_center=self.number(o, "grating_center_nm"),
            grating_fwhm=self.number(o, "grating_fwhm_nm"),
        )
        if mode == SPECTROMETER:
            s = "spectrometer"
            params.update(
                solid_angle_1to2=self.number(s, "solid_angle"),
                solid_angle_2to1=self.number(s, "solid_angle"),
                coupling_efficiency=self.number(s, "coupling_efficiency"),
            )
        try:
            return OpticsConfig(**params)
        except ValueError as exc:
            raise ConfigError(f"[optics] {exc}") from None

    def scan_wavelengths(self):
        s = "spectrometer"
        start, stop, step = (self.number(s, k) for k in ("scan_start_nm", "scan_stop_nm", "scan_step_nm"))
        if not step > 0 or stop < start:
            raise ConfigError("[spectrometer] scan needs step > 0 and stop >= start")
        n = int(round((stop - start) / step)) + 1
        return start + step * np.arange(n)

    def dump(self):
        lines = []
        for section, kv in self.values.items():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in kv.items()]
            lines.append("")
        return "\n".join(lines)


def provenance(checksum=None, seed=None, **extra):
    lines = [f"tool = apdflash {__version__}"]
    if checksum is not None:
        lines.append(f"config_sha256 = {checksum}")
    if seed is not None:
        lines.append(f"seed = {seed}")
    lines += [f"{k} = {v}" for k, v in extra.items()]
    return lines
