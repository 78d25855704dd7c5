"""Delay-and-sum reconstruction, envelope detection and display stages.

Images live on a sector grid: ``values[line, depth]`` with focal point
``p = (R sin(theta), R cos(theta))``. Channel signals are converted to analytic
signals, read at the geometric delay with fractional interpolation, summed in
ascending channel order, and the magnitude is taken after the sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .array import AcquisitionConfig, ArrayGeometry
from .errors import InvalidArgument
from .sim import PAChannelData, SAChannelData, STAChannelData, focal_law_offset

INTERPOLATORS = ("baseband", "linear", "cubic")


@dataclass(frozen=True)
class SectorGrid:
    angles: np.ndarray
    depths: np.ndarray

    @classmethod
    def from_config(cls, cfg: AcquisitionConfig, depth_step=None):
        return cls(cfg.line_angles, cfg.depth_axis(depth_step))

    @property
    def shape(self):
        return (len(self.angles), len(self.depths))

    def points(self):
        """Cartesian ``(x, z)`` of every grid node, each shaped like the image."""
        th = self.angles[:, None]
        r = self.depths[None, :]
        return r * np.sin(th), r * np.cos(th)


@dataclass(frozen=True)
class SectorImage:
    """Beamformed image in (scan line, depth) coordinates.

    ``coverage`` holds, per focal point, the fraction of channel reads that
    fell inside the recorded time span.
    """

    values: np.ndarray
    line_angles: np.ndarray
    depth_axis: np.ndarray
    coverage: np.ndarray | None = None

    @property
    def grid(self):
        return SectorGrid(self.line_angles, self.depth_axis)

    def with_values(self, values):
        return SectorImage(values, self.line_angles, self.depth_axis, self.coverage)


@dataclass(frozen=True)
class RasterImage:
    """Cartesian image, ``pixels[z, x]``."""

    pixels: np.ndarray
    x_axis: np.ndarray
    z_axis: np.ndarray
    pixel_pitch: float


def _next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


def analytic_signal(rf, axis=-1):
    """FFT-based analytic signal along ``axis`` (zero-padded to a power of two)."""
    rf = np.asarray(rf, dtype=float)
    n = rf.shape[axis] if rf.ndim else 0
    if n < 2:
        raise InvalidArgument("analytic signal needs at least two samples")
    nfft = _next_pow2(n)
    spec = np.fft.fft(rf, n=nfft, axis=axis)
    h = np.zeros(nfft)
    h[0] = 1.0
    h[nfft // 2] = 1.0
    h[1:nfft // 2] = 2.0
    shape = [1] * rf.ndim
    shape[axis] = nfft
    out = np.fft.ifft(spec * h.reshape(shape), axis=axis)
    return np.take(out, np.arange(n), axis=axis)


def _keys(s):
    # cubic convolution kernel, a = -0.5
    s = np.abs(s)
    return np.where(s <= 1, 1.5 * s**3 - 2.5 * s**2 + 1,
                    np.where(s < 2, -0.5 * s**3 + 2.5 * s**2 - 4 * s + 2, 0.0))


def read_fractional(signal, idx, method="linear"):
    """Sample the 1-D ``signal`` at fractional indices ``idx``.

    Reads outside ``[0, n - 1]`` return 0. Returns ``(values, in_range_mask)``.
    """
    n = signal.shape[-1]
    valid = (idx >= 0) & (idx <= n - 1)
    i0 = np.floor(idx).astype(np.int64)
    frac = idx - i0
    if method == "linear":
        a = np.clip(i0, 0, n - 1)
        b = np.clip(i0 + 1, 0, n - 1)
        out = signal[a] * (1.0 - frac) + signal[b] * frac
    elif method == "cubic":
        out = np.zeros(idx.shape, dtype=signal.dtype)
        for m in (-1, 0, 1, 2):
            j = i0 + m
            w = _keys(frac - m)
            inside = (j >= 0) & (j <= n - 1)
            out = out + np.where(inside, signal[np.clip(j, 0, n - 1)], 0) * w
    else:
        raise InvalidArgument(f"unknown interpolation {method!r}; expected {INTERPOLATORS}")
    return np.where(valid, out, 0), valid


class ChannelReader:
    """Fractional-delay reads from a stack of analytic channel signals.

    Demodulation for ``baseband`` reads is done once per stack.
    """

    def __init__(self, analytic, fs, pulse=None, method="baseband"):
        if method not in INTERPOLATORS:
            raise InvalidArgument(f"unknown interpolation {method!r}; expected {INTERPOLATORS}")
        self.fs = fs
        self.t_center = 0.0 if pulse is None else pulse.center_time
        self.omega = 0.0 if pulse is None else 2.0 * np.pi * pulse.f0 / fs
        self.method = method
        if method == "baseband" and self.omega != 0.0:
            k = np.arange(analytic.shape[-1])
            self.signals = analytic * np.exp(-1j * self.omega * k)
        else:
            self.signals = analytic

    def __call__(self, channel, delay):
        """Read ``channel`` at path delay ``delay`` seconds (plus the pulse centre)."""
        idx = (delay + self.t_center) * self.fs
        sig = self.signals[channel]
        if self.method == "baseband":
            v, ok = read_fractional(sig, idx, "linear")
            if self.omega != 0.0:
                v = v * np.exp(1j * self.omega * idx)
            return v, ok
        return read_fractional(sig, idx, self.method)


def _element_distances(grid: SectorGrid, element_x):
    x, z = grid.points()
    return np.sqrt((x[None] - np.asarray(element_x)[:, None, None]) ** 2 + z[None] ** 2)


def _finish(total, hits, n_reads, grid, envelope):
    values = np.abs(total) if envelope else total
    return SectorImage(values, np.asarray(grid.angles, float), np.asarray(grid.depths, float),
                       hits / max(n_reads, 1))


def das_sa(data: SAChannelData, array: ArrayGeometry, cfg: AcquisitionConfig,
           grid: SectorGrid | None = None, pulse=None, interp: str = "baseband",
           envelope: bool = True) -> SectorImage:
    """Monostatic DAS: ``|sum_i s_i(2 |p - e_i| / c)|``.

    With ``pulse`` given, reads are shifted to its envelope centre and the
    baseband interpolator demodulates at its centre frequency.
    """
    grid = SectorGrid.from_config(cfg) if grid is None else grid
    read = ChannelReader(analytic_signal(data.samples, axis=-1), data.fs, pulse, interp)
    dist = _element_distances(grid, array.element_x)
    total = np.zeros(grid.shape, dtype=complex)
    hits = np.zeros(grid.shape)
    for i in range(array.n_elements):
        v, ok = read(i, 2.0 * dist[i] / cfg.c)
        total += v
        hits += ok
    return _finish(total, hits, array.n_elements, grid, envelope)


def das_sta(data: STAChannelData, array: ArrayGeometry, cfg: AcquisitionConfig,
            grid: SectorGrid | None = None, pulse=None, interp: str = "baseband",
            envelope: bool = True) -> SectorImage:
    """Compounded STA DAS over every recorded (transmit, receive) pair."""
    grid = SectorGrid.from_config(cfg) if grid is None else grid
    read = ChannelReader(analytic_signal(data.samples, axis=-1), data.fs, pulse, interp)
    dist = _element_distances(grid, array.element_x)
    total = np.zeros(grid.shape, dtype=complex)
    hits = np.zeros(grid.shape)
    for a, t in enumerate(data.tx_index):
        for b, r in enumerate(data.rx_index):
            v, ok = read((a, b), (dist[t] + dist[r]) / cfg.c)
            total += v
            hits += ok
    return _finish(total, hits, len(data.tx_index) * len(data.rx_index), grid, envelope)


def das_pa(data: PAChannelData, array: ArrayGeometry, cfg: AcquisitionConfig,
           depths=None, pulse=None, interp: str = "baseband",
           envelope: bool = True) -> SectorImage:
    """Phased-array DAS with dynamic receive focusing along each scan line.

    The transmit path to range R is taken as ``offset + R / c`` where ``offset``
    aligns the focal law with a virtual source at the array centre.
    """
    depths = cfg.depth_axis() if depths is None else np.asarray(depths, float)
    grid = SectorGrid(np.asarray(data.line_angles, float), depths)
    read = ChannelReader(analytic_signal(data.samples, axis=-1), data.fs, pulse, interp)
    x, z = grid.points()
    total = np.zeros(grid.shape, dtype=complex)
    hits = np.zeros(grid.shape)
    for ln, theta in enumerate(grid.angles):
        t_tx = focal_law_offset(array, theta, data.tx_focus_depth, cfg.c) + depths / cfg.c
        for b, j in enumerate(data.rx_index):
            d_rx = np.sqrt((x[ln] - array.element_x[j]) ** 2 + z[ln] ** 2)
            v, ok = read((ln, b), t_tx + d_rx / cfg.c)
            total[ln] += v
            hits[ln] += ok
    return _finish(total, hits, len(data.rx_index), grid, envelope)


def log_compress(img: SectorImage, dynamic_range_db: float = 60.0) -> SectorImage:
    """Map ``20 log10(v / max)`` clipped to ``[-DR, 0]`` onto ``[0, 1]``."""
    if dynamic_range_db <= 0:
        raise InvalidArgument("dynamic range must be positive")
    v = np.abs(np.asarray(img.values))
    peak = v.max() if v.size else 0.0
    if peak <= 0:
        return img.with_values(np.zeros(v.shape))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(v / peak)
    db = np.clip(db, -dynamic_range_db, 0.0)
    return img.with_values((db + dynamic_range_db) / dynamic_range_db)


def scan_convert(img: SectorImage, pixel_pitch: float) -> RasterImage:
    """Bilinear (theta, R) resampling onto a Cartesian grid; zero outside the sector."""
    if pixel_pitch <= 0:
        raise InvalidArgument("pixel pitch must be positive")
    th = np.asarray(img.line_angles, float)
    r = np.asarray(img.depth_axis, float)
    half = np.max(np.abs(th))
    x_max = r[-1] * np.sin(half)
    n_x = int(np.floor(x_max / pixel_pitch))
    x_axis = pixel_pitch * np.arange(-n_x, n_x + 1)
    z_lo = r[0] * np.cos(half)
    z_axis = z_lo + pixel_pitch * np.arange(int(np.floor((r[-1] - z_lo) / pixel_pitch)) + 1)
    zz, xx = np.meshgrid(z_axis, x_axis, indexing="ij")
    theta = np.arctan2(xx, zz)
    rho = np.hypot(xx, zz)
    values = np.asarray(img.values)
    if len(th) == 1:
        # a single line cannot be interpolated laterally
        interp = RegularGridInterpolator((r,), values[0], bounds_error=False, fill_value=0.0)
        inside = np.isclose(theta, th[0]) & (rho >= r[0]) & (rho <= r[-1])
        pix = np.where(inside, interp(rho[..., None]), 0.0)
    else:
        interp = RegularGridInterpolator((th, r), values, bounds_error=False, fill_value=0.0)
        inside = (theta >= th[0]) & (theta <= th[-1]) & (rho >= r[0]) & (rho <= r[-1])
        pix = np.where(inside, interp(np.stack([theta, rho], axis=-1)), 0.0)
    return RasterImage(pixels=pix, x_axis=x_axis, z_axis=z_axis, pixel_pitch=pixel_pitch)
