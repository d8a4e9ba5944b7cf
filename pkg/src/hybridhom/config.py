"""Experiment configuration: typed sections, INI parsing and figure presets.

A config file is plain INI. Every key must belong to a known section and
field; anything else is rejected with the offending line number. Lists are
comma-separated numbers.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field, fields

from hybridhom.errors import ConfigError
from hybridhom.detection import TCSPC_JITTER_FWHM_PS


@dataclass
class RunConfig:
    preset: str = ""
    duration_s: float = 1.0
    chunk_s: float = 0.5
    seed: int = 1
    out: str = "out"


@dataclass
class SfwmConfig:
    # detected rate of unheralded signal photons; the pair rate follows from
    # the signal-path and detector efficiencies
    signal_rate_hz: float = 0.88e6
    biphoton_fwhm_ps: float = 128.0
    mode_duration_ps: float = 128.0
    beat_frequency_ghz: float = 0.0
    beat_amplitude: float = 0.0
    eta_s: float = 0.37
    eta_i: float = 0.57


@dataclass
class QdConfig:
    lifetime_ps: float = 1010.0
    coherence_ps: float = 129.0
    residual_g2: float = 0.01
    detected_rate_hz: float = 0.44e6
    # fraction of emitted photons that end up detected
    mu: float = 0.019


@dataclass
class InterferenceConfig:
    iid: float = 0.92
    kernel_tau_ps: float = 500.0
    polarization: str = "parallel"
    pairing_window_ps: float = 0.0
    delay_ps: float = 19600.0
    detuning_ghz: float = 0.0


@dataclass
class DetectionConfig:
    eff_idler: float = 0.70
    eff_signal: float = 0.596
    # 0 derives the per-detector jitter from the named system response
    jitter_fwhm_ps: float = 0.0
    tcspc_jitter_fwhm_ps: float = TCSPC_JITTER_FWHM_PS
    dark_rate_hz: float = 0.0
    dead_time_ps: float = 0.0
    response: str = "two_detector"


@dataclass
class CorrelatorConfig:
    bin_width_ps: int = 32
    lag_range_ps: int = 10000
    herald_window_ps: int = 80
    reference: str = "either"
    plateau_start_ps: float = 5000.0
    normalization: str = "plateau"


@dataclass
class SpectraConfig:
    qd_fwhm_ghz: float = 2.17
    detuning_ghz: float = 10.7
    fsr_ghz: float = 10.0
    finesse: float = 160.0
    window_ghz: float = 0.055
    target_overlap: float = 0.92
    side_center_ghz: float = -1.2
    side_fwhm_ghz: float = 1.0
    grid_step_ghz: float = 0.002
    grid_half_width_ghz: float = 5.0


@dataclass
class AnalyticsConfig:
    r_values: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    nbar_min: float = 1e-3
    nbar_max: float = 0.1
    nbar_points: int = 21
    mu_min: float = 0.01
    mu_max: float = 0.2
    mu_points: int = 20
    iid: float = 1.0
    g2_residual: float = 0.01
    post_loss: bool = False


@dataclass
class FitkitConfig:
    fit_range_ps: float = 3000.0
    # 0 uses the detection response
    response_fwhm_ps: float = 0.0


SECTIONS = {
    "run": RunConfig,
    "sfwm": SfwmConfig,
    "qd": QdConfig,
    "interference": InterferenceConfig,
    "detection": DetectionConfig,
    "correlator": CorrelatorConfig,
    "spectra": SpectraConfig,
    "analytics": AnalyticsConfig,
    "fitkit": FitkitConfig,
}


@dataclass
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    sfwm: SfwmConfig = field(default_factory=SfwmConfig)
    qd: QdConfig = field(default_factory=QdConfig)
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    correlator: CorrelatorConfig = field(default_factory=CorrelatorConfig)
    spectra: SpectraConfig = field(default_factory=SpectraConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)
    fitkit: FitkitConfig = field(default_factory=FitkitConfig)

    def copy(self):
        return ExperimentConfig(**{name: dataclasses.replace(getattr(self, name)) for name in SECTIONS})

    def updated(self, overrides):
        """Copy with ``{"section": {"key": value}}`` applied."""
        out = self.copy()
        for section, values in overrides.items():
            block = getattr(out, section)
            for key, value in values.items():
                if not hasattr(block, key):
                    raise ConfigError(f"unknown key {section}.{key}")
                setattr(block, key, value)
        return out

    def to_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def to_ini(self):
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for key, value in dataclasses.asdict(getattr(self, name)).items():
                if isinstance(value, tuple):
                    value = ", ".join(repr(v) for v in value)
                elif isinstance(value, bool):
                    value = "true" if value else "false"
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def _field_type(cls, name):
    for f in fields(cls):
        if f.name == name:
            return type(f.default) if f.default is not dataclasses.MISSING else str
    return None


def _convert(kind, text):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind is float:
        value = float(text)
        if math.isnan(value):
            raise ValueError("NaN is not allowed")
        return value
    if kind is tuple:
        return tuple(float(v) for v in text.split(",") if v.strip())
    return text


def _line_of(lines, section, key=None):
    current = None
    for number, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return number
            continue
        if key is not None and current == section:
            m = re.match(r"^([^=:#;]+?)\s*[=:]", stripped)
            if m and m.group(1).strip().lower() == key:
                return number
    return None


def parse_config(text, base=None):
    """Parse INI text into an :class:`ExperimentConfig`.

    Values start from ``base`` (or from the preset named in ``[run] preset``,
    or from the defaults) and are overridden key by key.
    """
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line", lineno) from None

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", _line_of(lines, section))

    if base is None:
        preset = parser.get("run", "preset", fallback="").strip()
        base = preset_config(preset) if preset else ExperimentConfig()
    cfg = base.copy()
    for section in parser.sections():
        cls = SECTIONS[section]
        block = getattr(cfg, section)
        for key, raw in parser.items(section):
            kind = _field_type(cls, key)
            line = _line_of(lines, section, key)
            if kind is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            try:
                value = _convert(kind, raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}", line) from None
            setattr(block, key, value)
    validate(cfg)
    return cfg


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config(fh.read(), base)


def validate(cfg):
    """Range checks that do not need the physics modules."""
    checks = [
        (cfg.run.duration_s >= 0, "run.duration_s must be >= 0"),
        (cfg.run.chunk_s > 0, "run.chunk_s must be > 0"),
        (cfg.sfwm.signal_rate_hz >= 0, "sfwm.signal_rate_hz must be >= 0"),
        (0 <= cfg.sfwm.eta_s <= 1 and 0 <= cfg.sfwm.eta_i <= 1, "sfwm efficiencies must lie in [0, 1]"),
        (0 <= cfg.detection.eff_signal <= 1 and 0 <= cfg.detection.eff_idler <= 1, "detector efficiencies must lie in [0, 1]"),
        (0 < cfg.qd.mu <= 1, "qd.mu must lie in (0, 1]"),
        (cfg.interference.polarization in ("parallel", "orthogonal"), "interference.polarization must be parallel or orthogonal"),
        (cfg.correlator.reference in ("ch1", "ch2", "either"), "correlator.reference must be ch1, ch2 or either"),
        (cfg.correlator.bin_width_ps > 0, "correlator.bin_width_ps must be > 0"),
        (cfg.correlator.lag_range_ps >= cfg.correlator.bin_width_ps, "correlator.lag_range_ps must be >= bin width"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def jitter_for_response(response_fwhm_ps, tcspc_fwhm_ps=TCSPC_JITTER_FWHM_PS):
    """Per-detector jitter making the two-channel lag response equal ``response_fwhm_ps``.

    A lag between two channels carries the timing noise of both, so each
    channel gets ``response/sqrt(2)`` in total, shared with the TCSPC.
    """
    per_channel = response_fwhm_ps / math.sqrt(2.0)
    if per_channel < tcspc_fwhm_ps:
        raise ConfigError("response narrower than the TCSPC jitter allows")
    return math.sqrt(per_channel**2 - tcspc_fwhm_ps**2)


PRESETS = {
    "fig3a": {
        "run": {"preset": "fig3a", "duration_s": 2.0, "chunk_s": 0.5},
        "sfwm": {"signal_rate_hz": 0.88e6},
        "detection": {"response": "two_detector"},
        "correlator": {"bin_width_ps": 64, "lag_range_ps": 20000, "herald_window_ps": 80,
                       "reference": "ch1", "plateau_start_ps": 10000.0, "normalization": "heralded"},
        "fitkit": {"fit_range_ps": 1000.0},
    },
    "fig3b": {
        "run": {"preset": "fig3b", "duration_s": 60.0, "chunk_s": 0.5},
        "sfwm": {"signal_rate_hz": 2.0e6},
        "interference": {"iid": 1.0, "kernel_tau_ps": 500.0},
        "detection": {"response": "two_detector"},
        "correlator": {"bin_width_ps": 64, "lag_range_ps": 10000, "herald_window_ps": 80,
                       "plateau_start_ps": 5000.0},
        "fitkit": {"fit_range_ps": 4000.0},
    },
    "fig3c": {
        "run": {"preset": "fig3c", "duration_s": 200.0, "chunk_s": 1.0},
        "detection": {"response": "two_detector"},
        "correlator": {"bin_width_ps": 50, "lag_range_ps": 15000, "plateau_start_ps": 8000.0},
        "fitkit": {"fit_range_ps": 15000.0},
    },
    "fig3d": {
        "run": {"preset": "fig3d", "duration_s": 400.0, "chunk_s": 1.0},
        "interference": {"iid": 1.0, "kernel_tau_ps": 129.0, "delay_ps": 19600.0},
        "detection": {"response": "two_detector"},
        "correlator": {"bin_width_ps": 16, "lag_range_ps": 10000, "plateau_start_ps": 6000.0},
        "fitkit": {"fit_range_ps": 1500.0},
    },
    "fig4a": {
        "run": {"preset": "fig4a", "duration_s": 200.0, "chunk_s": 1.0},
        "sfwm": {"signal_rate_hz": 0.44e6, "mode_duration_ps": 2000.0},
        "interference": {"iid": 0.92, "kernel_tau_ps": 500.0, "detuning_ghz": 10.7},
        "detection": {"response": "three_detector"},
        "correlator": {"bin_width_ps": 32, "lag_range_ps": 10000, "herald_window_ps": 80,
                       "reference": "either", "plateau_start_ps": 5000.0},
        "fitkit": {"fit_range_ps": 5000.0},
    },
    "fig4b": {
        "run": {"preset": "fig4b", "duration_s": 500.0, "chunk_s": 1.0},
        "sfwm": {"signal_rate_hz": 0.11e6, "mode_duration_ps": 2000.0},
        "interference": {"iid": 0.92, "kernel_tau_ps": 500.0, "detuning_ghz": 0.0},
        "detection": {"response": "three_detector"},
        "correlator": {"bin_width_ps": 32, "lag_range_ps": 10000, "herald_window_ps": 80,
                       "reference": "either", "plateau_start_ps": 5000.0},
        "fitkit": {"fit_range_ps": 3000.0},
    },
    "fig4c": {
        "run": {"preset": "fig4c", "duration_s": 150.0, "chunk_s": 1.0},
        "sfwm": {"mode_duration_ps": 2000.0},
        "interference": {"iid": 0.92, "kernel_tau_ps": 500.0},
        "detection": {"response": "three_detector"},
        "correlator": {"bin_width_ps": 32, "lag_range_ps": 10000, "herald_window_ps": 80,
                       "reference": "either", "plateau_start_ps": 5000.0},
        "analytics": {"r_values": (0.25, 0.5, 1.0, 2.0)},
        "fitkit": {"fit_range_ps": 3000.0},
    },
    "fig4d": {
        "run": {"preset": "fig4d", "duration_s": 0.0},
        "analytics": {"iid": 1.0},
    },
}


def preset_names():
    return sorted(PRESETS)


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    return ExperimentConfig().updated(PRESETS[name])
