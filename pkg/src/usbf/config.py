"""Experiment configuration: ``[section]`` headers with ``key = value`` lines.

Every key has a desk-scale default. Unknown sections or keys are errors.
Lengths are in millimetres, frequencies in MHz and angles in degrees.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field

from .array import AcquisitionConfig, array_pair, make_pulse
from .errors import ConfigurationError
from .nn import TrainConfig


@dataclass
class AcquisitionSection:
    c: float = 1540.0
    fs_mhz: float = 16.0
    depth_min_mm: float = 10.0
    depth_max_mm: float = 70.0
    sector_deg: float = 48.0
    n_scan_lines: int = 33
    tx_focus_mm: float = 50.0


@dataclass
class ArraySection:
    n_small: int = 17
    element_width_mm: float = 0.220
    kerf_mm: float = 0.044


@dataclass
class PulseSection:
    f0_mhz: float = 3.5
    n_cycles: float = 1.75
    window: str = "hann"


@dataclass
class DatasetSection:
    n_pairs: int = 8000
    mix: float = 0.5
    patch_length: int = 32


@dataclass
class NetworkSection:
    dense_widths: tuple = (512, 512)
    conv_channels: tuple = (16, 16)
    leaky_slope: float = 0.3


@dataclass
class TrainingSection:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    decay: float = 1e-8
    patience: int = 5
    factor: float = 0.5
    val_fraction: float = 0.1


@dataclass
class ExperimentSection:
    technique: str = "sa"
    seed: int = 0
    interp: str = "baseband"
    dynamic_range_db: float = 60.0
    pixel_mm: float = 0.2
    eval_lines: int = 97
    point_x_mm: float = 0.0
    point_z_mm: float = 50.0
    window_mm: float = 10.0
    profile_half_window_mm: float = 5.0
    cyst_x_mm: float = 0.0
    cyst_z_mm: float = 45.0
    cyst_radius_mm: float = 5.0
    cyst_half_width_mm: float = 15.0
    cyst_half_depth_mm: float = 15.0
    cyst_scatterers: int = 3000
    sweep_depths_mm: tuple = (20.0, 30.0, 40.0, 50.0, 60.0)
    receive_factors: tuple = (1, 2, 4, 8)
    subset_mode: str = "stride"


SECTIONS = {
    "acquisition": AcquisitionSection,
    "array": ArraySection,
    "pulse": PulseSection,
    "dataset": DatasetSection,
    "network": NetworkSection,
    "training": TrainingSection,
    "experiment": ExperimentSection,
}


@dataclass
class ExperimentConfig:
    acquisition: AcquisitionSection = field(default_factory=AcquisitionSection)
    array: ArraySection = field(default_factory=ArraySection)
    pulse: PulseSection = field(default_factory=PulseSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # derived objects -----------------------------------------------------

    def acquisition_config(self, n_scan_lines=None) -> AcquisitionConfig:
        a = self.acquisition
        return AcquisitionConfig(
            c=a.c, fs=a.fs_mhz * 1e6, depth_min=a.depth_min_mm * 1e-3,
            depth_max=a.depth_max_mm * 1e-3, sector_angle=math.radians(a.sector_deg),
            n_scan_lines=a.n_scan_lines if n_scan_lines is None else n_scan_lines,
            tx_focus_depth=a.tx_focus_mm * 1e-3)

    def arrays(self):
        a = self.array
        return array_pair(a.n_small, a.element_width_mm * 1e-3, a.kerf_mm * 1e-3)

    def pulse_waveform(self):
        p = self.pulse
        return make_pulse(p.f0_mhz * 1e6, p.n_cycles, self.acquisition.fs_mhz * 1e6, p.window)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(epochs=t.epochs, batch_size=t.batch_size, lr=t.lr, decay=t.decay,
                           patience=t.patience, factor=t.factor, val_fraction=t.val_fraction,
                           seed=self.experiment.seed)

    def validate(self):
        if self.experiment.technique not in ("sa", "sta", "pa"):
            raise ConfigurationError(f"unknown technique {self.experiment.technique!r}")
        if not 0.0 <= self.dataset.mix <= 1.0:
            raise ConfigurationError("dataset mix must lie in [0, 1]")
        if self.dataset.patch_length < 1 or self.dataset.n_pairs < 1:
            raise ConfigurationError("dataset sizes must be positive")
        if self.array.n_small < 2:
            raise ConfigurationError("the small array needs at least two elements")
        try:
            self.acquisition_config()
            self.arrays()
            self.pulse_waveform()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        return self

    # text form -----------------------------------------------------------

    def to_text(self) -> str:
        out = io.StringIO()
        for name in SECTIONS:
            out.write(f"[{name}]\n")
            section = getattr(self, name)
            for f in dataclasses.fields(section):
                out.write(f"{f.name} = {_format(getattr(section, f.name))}\n")
            out.write("\n")
        return out.getvalue()


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(text, default, where):
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            parts = [p.strip() for p in text.split(",") if p.strip()]
            return tuple(kind(p) for p in parts)
        return text
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {text!r}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigurationError(f"unknown section [{name}]")
        section = dataclasses.replace(getattr(cfg, name))
        known = {f.name: f for f in dataclasses.fields(section)}
        for key, value in parser.items(name):
            if key not in known:
                raise ConfigurationError(f"unknown key {key!r} in [{name}]")
            setattr(section, key, _convert(value, getattr(section, key), f"[{name}] {key}"))
        setattr(cfg, name, section)
    return cfg.validate()


def load_config(path=None, overrides=(), base=None) -> ExperimentConfig:
    """``base`` (or the defaults), then the file at ``path``, then ``section.key=value``."""
    cfg = ExperimentConfig() if base is None else base
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = parse_config(fh.read(), cfg)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigurationError(f"override {item!r} is not section.key=value")
        cfg = parse_config(f"[{section}]\n{name} = {value.strip()}\n", cfg)
    return cfg.validate()


FULL_PRESET = """\
[acquisition]
n_scan_lines = 65

[array]
n_small = 33

[dataset]
n_pairs = 30000
"""


def preset(name: str) -> ExperimentConfig:
    if name == "desk":
        return ExperimentConfig()
    if name == "full":
        return parse_config(FULL_PRESET)
    raise ConfigurationError(f"unknown preset {name!r}; expected 'desk' or 'full'")
