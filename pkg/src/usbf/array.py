"""Array geometry, transmit pulse, acquisition constants and phantoms.

All lengths are in metres, times in seconds, angles in radians. The imaging
plane is x (lateral) by z (depth), with the array on z = 0 and centred on x = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

RECTANGULAR = "rectangular"
HANN = "hann"
WINDOWS = (RECTANGULAR, HANN)


@dataclass(frozen=True)
class ArrayGeometry:
    """Centred uniform linear array."""

    element_x: np.ndarray
    pitch: float

    @property
    def n_elements(self) -> int:
        return len(self.element_x)

    @property
    def aperture(self) -> float:
        """Distance between the outer element centres."""
        return float(self.element_x[-1] - self.element_x[0])

    @property
    def width(self) -> float:
        """Physical extent, ``n_elements * pitch``."""
        return self.n_elements * self.pitch

    def index_of(self, x: float) -> int:
        """Index of the element located at ``x`` (exact match within 1e-12 m)."""
        hits = np.flatnonzero(np.abs(self.element_x - x) < 1e-12)
        if len(hits) != 1:
            raise InvalidArgument(f"no element at x = {x!r}")
        return int(hits[0])


def make_linear_array(n: int, element_width: float, kerf: float) -> ArrayGeometry:
    if n < 1:
        raise InvalidArgument(f"array needs at least one element, got n = {n}")
    if element_width < 0 or kerf < 0:
        raise InvalidArgument("element width and kerf must be non-negative")
    pitch = element_width + kerf
    # integer offsets keep the small/large subset relation exact
    x = (np.arange(n) - (n - 1) / 2.0) * pitch
    x.flags.writeable = False
    return ArrayGeometry(element_x=x, pitch=pitch)


def array_pair(n_small: int, element_width: float, kerf: float):
    """Small array and the ``2 * n_small - 1`` element array sharing its pitch."""
    return (
        make_linear_array(n_small, element_width, kerf),
        make_linear_array(2 * n_small - 1, element_width, kerf),
    )


@dataclass(frozen=True)
class PulseWaveform:
    """Windowed tone burst ``w(t) sin(2 pi f0 t)`` on ``[0, n_cycles / f0]``."""

    f0: float
    n_cycles: float
    fs: float
    window: str
    samples: np.ndarray = field(repr=False)

    @property
    def duration(self) -> float:
        return self.n_cycles / self.f0

    @property
    def center_time(self) -> float:
        """Time of the envelope maximum; beamformers add it to every delay."""
        return 0.5 * self.duration

    def __call__(self, t):
        """Evaluate the closed-form pulse at arbitrary times."""
        t = np.asarray(t, dtype=float)
        return pulse_value(t, self.f0, self.duration, self.window == HANN)


def pulse_value(t, f0, duration, hann):
    inside = (t >= 0.0) & (t <= duration)
    s = np.sin(2.0 * np.pi * f0 * t)
    if hann:
        s = s * 0.5 * (1.0 - np.cos(2.0 * np.pi * t / duration))
    return np.where(inside, s, 0.0)


def make_pulse(f0: float, n_cycles: float, fs: float, window: str = HANN) -> PulseWaveform:
    if f0 <= 0 or fs <= 0 or n_cycles <= 0:
        raise InvalidArgument("f0, fs and n_cycles must be positive")
    if window not in WINDOWS:
        raise InvalidArgument(f"unknown window {window!r}; expected one of {WINDOWS}")
    duration = n_cycles / f0
    n = int(round(fs * duration))
    t = np.arange(n) / fs
    samples = pulse_value(t, f0, duration, window == HANN)
    samples.flags.writeable = False
    return PulseWaveform(f0=f0, n_cycles=n_cycles, fs=fs, window=window, samples=samples)


@dataclass(frozen=True)
class AcquisitionConfig:
    c: float = 1540.0
    fs: float = 16e6
    depth_min: float = 10e-3
    depth_max: float = 70e-3
    sector_angle: float = math.radians(48.0)
    n_scan_lines: int = 33
    tx_focus_depth: float = 50e-3

    def __post_init__(self):
        if self.c <= 0 or self.fs <= 0:
            raise InvalidArgument("speed of sound and sampling rate must be positive")
        if not self.depth_min < self.depth_max:
            raise InvalidArgument("depth_min must be below depth_max")
        if self.n_scan_lines < 1:
            raise InvalidArgument("need at least one scan line")
        if self.tx_focus_depth <= 0:
            raise InvalidArgument("transmit focus depth must be positive")

    @property
    def line_angles(self) -> np.ndarray:
        """Scan-line steering angles spanning the sector symmetrically."""
        if self.n_scan_lines == 1:
            return np.zeros(1)
        half = 0.5 * self.sector_angle
        return np.linspace(-half, half, self.n_scan_lines)

    @property
    def depth_step(self) -> float:
        """Range spacing of one round-trip sample."""
        return self.c / (2.0 * self.fs)

    def depth_axis(self, step: float | None = None) -> np.ndarray:
        step = self.depth_step if step is None else step
        n = int(math.floor((self.depth_max - self.depth_min) / step + 1e-9)) + 1
        return self.depth_min + step * np.arange(n)


@dataclass(frozen=True)
class Phantom:
    """Discrete reflectivity: rows of ``(x, z, amplitude)``."""

    scatterers: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scatterers, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(s)):
            raise InvalidArgument("scatterer coordinates and amplitudes must be finite")
        if np.any(s[:, 1] <= 0):
            raise InvalidArgument("all scatterers must lie at z > 0")
        s.flags.writeable = False
        object.__setattr__(self, "scatterers", s)

    def __len__(self):
        return len(self.scatterers)

    @property
    def x(self):
        return self.scatterers[:, 0]

    @property
    def z(self):
        return self.scatterers[:, 1]

    @property
    def amplitude(self):
        return self.scatterers[:, 2]

    def scaled(self, alpha: float) -> "Phantom":
        s = self.scatterers.copy()
        s[:, 2] *= alpha
        return Phantom(s)

    def __add__(self, other: "Phantom") -> "Phantom":
        return Phantom(np.vstack([self.scatterers, other.scatterers]))


def make_point_phantom(points) -> Phantom:
    """Wrap ``(x, z, amplitude)`` triples; amplitude defaults to 1."""
    rows = []
    for p in points:
        p = tuple(p)
        if len(p) == 2:
            p = (p[0], p[1], 1.0)
        rows.append(p)
    return Phantom(np.array(rows, dtype=float).reshape(-1, 3))


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    z_min: float
    z_max: float

    @property
    def area(self):
        return (self.x_max - self.x_min) * (self.z_max - self.z_min)


def make_cyst_phantom(region: Rect, cyst_center, cyst_radius: float,
                      n_scatterers: int, seed: int) -> Phantom:
    """Speckle field over ``region`` with an anechoic disc removed.

    Scatterers are drawn uniformly with standard-normal amplitudes; those that
    fall inside the cyst are discarded, so fewer than ``n_scatterers`` remain.
    """
    cx, cz = cyst_center
    if n_scatterers < 1:
        raise InvalidArgument("n_scatterers must be at least 1")
    if cyst_radius <= 0:
        raise InvalidArgument("cyst radius must be positive")
    if (cx - cyst_radius < region.x_min or cx + cyst_radius > region.x_max
            or cz - cyst_radius < region.z_min or cz + cyst_radius > region.z_max):
        raise InvalidArgument("cyst disc must lie inside the phantom region")
    if region.z_min <= 0:
        raise InvalidArgument("phantom region must lie at z > 0")
    rng = np.random.default_rng(seed)
    x = rng.uniform(region.x_min, region.x_max, n_scatterers)
    z = rng.uniform(region.z_min, region.z_max, n_scatterers)
    a = rng.standard_normal(n_scatterers)
    keep = (x - cx) ** 2 + (z - cz) ** 2 > cyst_radius ** 2
    return Phantom(np.column_stack([x[keep], z[keep], a[keep]]))
