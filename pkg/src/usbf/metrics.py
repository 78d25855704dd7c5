"""Image-quality measures: lateral FWHM, RMS sidelobe level, CR and CNR."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import InvalidArgument, MeasurementFailed


@dataclass(frozen=True)
class LateralProfile:
    """Envelope across scan lines at one depth; positions are arc lengths in mm."""

    positions: np.ndarray
    amplitudes: np.ndarray
    peak_index: int

    @classmethod
    def from_arrays(cls, positions, amplitudes):
        positions = np.asarray(positions, float)
        amplitudes = np.asarray(amplitudes, float)
        if positions.shape != amplitudes.shape or positions.ndim != 1:
            raise InvalidArgument("positions and amplitudes must be matching 1-D arrays")
        if np.any(np.diff(positions) <= 0):
            raise InvalidArgument("profile positions must be increasing")
        if np.any(amplitudes < 0):
            raise InvalidArgument("profile amplitudes must be non-negative")
        return cls(positions, amplitudes, int(np.argmax(amplitudes)))


@dataclass(frozen=True)
class RegionStats:
    mean: float
    var: float

    @classmethod
    def of(cls, values):
        values = np.asarray(values, float).ravel()
        if values.size == 0:
            raise InvalidArgument("region is empty")
        return cls(float(values.mean()), float(values.var()))


def lateral_profile(img, depth=None, half_window=None) -> LateralProfile:
    """Profile of a sector image at ``depth`` (default: the row of the global peak).

    With ``half_window`` (metres) each scan line contributes its maximum over
    depths within that distance of ``depth``, so sidelobe energy displaced in
    range still counts. Positions are arc lengths at ``depth``.
    """
    values = np.abs(np.asarray(img.values))
    depths = np.asarray(img.depth_axis)
    if depth is None:
        row = int(np.unravel_index(np.argmax(values), values.shape)[1])
    else:
        row = int(np.argmin(np.abs(depths - depth)))
    r = depths[row]
    if half_window is None:
        amps = values[:, row]
    else:
        keep = np.abs(depths - r) <= half_window
        amps = values[:, keep].max(axis=1)
    return LateralProfile.from_arrays(1e3 * r * np.asarray(img.line_angles), amps)


def _check_peak(profile: LateralProfile):
    a = profile.amplitudes
    k = profile.peak_index
    if k == 0 or k == len(a) - 1:
        raise MeasurementFailed("profile peak lies on the boundary")
    if np.count_nonzero(a == a[k]) > 1:
        raise MeasurementFailed("profile has no unique peak")
    return a, k


def fwhm(profile: LateralProfile) -> float:
    """Width between the half-maximum crossings nearest the peak, in mm."""
    a, k = _check_peak(profile)
    x = profile.positions
    half = 0.5 * a[k]

    i = k
    while i > 0 and a[i - 1] >= half:
        i -= 1
    if i == 0:
        raise MeasurementFailed("no half-maximum crossing left of the peak")
    left = x[i - 1] + (half - a[i - 1]) / (a[i] - a[i - 1]) * (x[i] - x[i - 1])

    j = k
    while j < len(a) - 1 and a[j + 1] >= half:
        j += 1
    if j == len(a) - 1:
        raise MeasurementFailed("no half-maximum crossing right of the peak")
    right = x[j] + (a[j] - half) / (a[j] - a[j + 1]) * (x[j + 1] - x[j])
    return float(right - left)


def mainlobe_bounds(profile: LateralProfile, cap=2.0):
    """Indices of the first local minima flanking the peak (3-sample smoothing).

    Broadband point spread functions can decay monotonically with no minimum;
    the search therefore stops ``cap`` FWHMs away from the peak.
    """
    a, k = _check_peak(profile)
    x = profile.positions
    limit = cap * fwhm(profile)
    s = uniform_filter1d(a, 3, mode="nearest")
    lo = k
    while lo > 0 and s[lo - 1] < s[lo] and x[k] - x[lo - 1] <= limit:
        lo -= 1
    hi = k
    while hi < len(a) - 1 and s[hi + 1] < s[hi] and x[hi + 1] - x[k] <= limit:
        hi += 1
    return lo, hi


def rms_sidelobe(profile: LateralProfile) -> float:
    """RMS of the samples outside the mainlobe, in dB relative to the peak."""
    lo, hi = mainlobe_bounds(profile)
    a = profile.amplitudes
    side = np.concatenate([a[:lo], a[hi + 1:]])
    if side.size == 0:
        raise MeasurementFailed("profile has no sidelobe samples")
    rms = math.sqrt(float(np.mean(side ** 2)))
    if rms == 0:
        return float("-inf")
    return 20.0 * math.log10(rms / a[profile.peak_index])


def cnr(image, region_cyst, region_background) -> float:
    """``|mu_b - mu_c| / sqrt(var_b + var_c)`` on the linear envelope."""
    c, b = _regions(image, region_cyst, region_background)
    denom = math.sqrt(b.var + c.var)
    if denom == 0:
        return 0.0 if b.mean == c.mean else float("inf")
    return abs(b.mean - c.mean) / denom


def cr(image, region_cyst, region_background) -> float:
    """``20 log10(mu_c / mu_b)`` in dB; ``-inf`` when the cyst mean is exactly 0."""
    c, b = _regions(image, region_cyst, region_background)
    if b.mean <= 0:
        raise InvalidArgument("background mean must be positive")
    if c.mean < 0:
        raise InvalidArgument("cyst mean must be non-negative")
    if c.mean == 0:
        return float("-inf")
    return 20.0 * math.log10(c.mean / b.mean)


def _regions(image, region_cyst, region_background):
    values = np.abs(np.asarray(getattr(image, "values", image)))
    mc = np.asarray(region_cyst, bool)
    mb = np.asarray(region_background, bool)
    if np.any(mc & mb):
        raise InvalidArgument("cyst and background regions overlap")
    return RegionStats.of(values[mc]), RegionStats.of(values[mb])


def cyst_regions(img, center, radius, inner=0.8, annulus=(1.25, 2.0)):
    """Masks for a disc at ``inner * radius`` and a concentric background annulus."""
    x, z = img.grid.points()
    d = np.hypot(x - center[0], z - center[1])
    cyst = d <= inner * radius
    background = (d >= annulus[0] * radius) & (d <= annulus[1] * radius)
    return cyst, background


def point_metrics(img, depth=None, half_window=None):
    profile = lateral_profile(img, depth, half_window)
    return fwhm(profile), rms_sidelobe(profile)


def depth_sweep(beamformer, depths, x=0.0, half_window=None):
    """FWHM and RMS sidelobe level for a single point target at each depth.

    ``beamformer(phantom_points)`` reconstructs a sector image from a list of
    ``(x, z, amplitude)`` targets. Rows are ``(depth_mm, fwhm_mm, rms_sll_db)``.
    """
    rows = []
    for depth in depths:
        img = beamformer([(x, depth, 1.0)])
        try:
            w, sll = point_metrics(img, depth, half_window)
        except MeasurementFailed as exc:
            raise MeasurementFailed(f"at depth {1e3 * depth:.2f} mm: {exc}") from exc
        rows.append((1e3 * depth, w, sll))
    return rows


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)
