"""Multi-channel RF echo simulation for SA, STA and PA acquisitions.

A phantom is a finite sum of point scatterers, so each channel is a sum of
delayed copies of the transmit pulse. The pulse is evaluated in closed form at
the exact (fractional) arrival time, only over the samples it overlaps.

Time zero is the instant of transmission (for PA: the firing of the earliest
element of the focal law).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .array import HANN, AcquisitionConfig, ArrayGeometry, Phantom, PulseWaveform
from .errors import ConfigurationError, InvalidArgument

RECEIVE_FACTORS = (1, 2, 4, 8)


@dataclass(frozen=True)
class SAChannelData:
    """Monostatic data, ``samples[element, k]`` at ``t_k = k / fs``."""

    samples: np.ndarray
    fs: float

    @property
    def t_axis(self):
        return np.arange(self.samples.shape[-1]) / self.fs


@dataclass(frozen=True)
class STAChannelData:
    """``samples[tx, rx, k]``; ``tx_index``/``rx_index`` locate rows in the array."""

    samples: np.ndarray
    fs: float
    tx_index: np.ndarray
    rx_index: np.ndarray

    @property
    def t_axis(self):
        return np.arange(self.samples.shape[-1]) / self.fs


@dataclass(frozen=True)
class PAChannelData:
    """``samples[line, rx, k]`` for focused, steered transmits."""

    samples: np.ndarray
    fs: float
    line_angles: np.ndarray
    tx_delays: np.ndarray
    tx_focus_depth: float
    rx_index: np.ndarray

    @property
    def t_axis(self):
        return np.arange(self.samples.shape[-1]) / self.fs


@numba.njit(cache=True)
def _pulse(tau, f0, duration, hann):
    s = math.sin(2.0 * math.pi * f0 * tau)
    if hann:
        s *= 0.5 * (1.0 - math.cos(2.0 * math.pi * tau / duration))
    return s


@numba.njit(cache=True)
def _deposit(row, onset, amp, fs, f0, duration, hann):
    n = row.shape[0]
    k0 = int(math.ceil(onset * fs))
    k1 = int(math.floor((onset + duration) * fs))
    if k0 < 0:
        k0 = 0
    if k1 > n - 1:
        k1 = n - 1
    for k in range(k0, k1 + 1):
        tau = k / fs - onset
        if tau >= 0.0 and tau <= duration:
            row[k] += amp * _pulse(tau, f0, duration, hann)


@numba.njit(cache=True)
def _bistatic_kernel(out, dist, amps, tx_rows, rx_rows, c, fs, f0, duration, hann):
    # out[r] receives every scatterer's echo on the path tx_rows[r] -> rx_rows[r]
    n_scat = dist.shape[1]
    for r in range(out.shape[0]):
        it = tx_rows[r]
        ir = rx_rows[r]
        for s in range(n_scat):
            onset = (dist[it, s] + dist[ir, s]) / c
            _deposit(out[r], onset, amps[r, s], fs, f0, duration, hann)


@numba.njit(cache=True)
def _focused_kernel(out, dist, amps, tx_delays, rx_rows, c, fs, f0, duration, hann):
    # out[line, j] = sum_s sum_i a pulse(t - d_i - (D_is + D_js) / c)
    n_lines = out.shape[0]
    n_tx = dist.shape[0]
    n_scat = dist.shape[1]
    for ln in range(n_lines):
        for jj in range(out.shape[1]):
            j = rx_rows[jj]
            for s in range(n_scat):
                for i in range(n_tx):
                    onset = tx_delays[ln, i] + (dist[i, s] + dist[j, s]) / c
                    _deposit(out[ln, jj], onset, amps[i, j, s], fs, f0, duration, hann)


def _distances(phantom: Phantom, array: ArrayGeometry):
    dx = phantom.x[None, :] - array.element_x[:, None]
    return np.sqrt(dx * dx + phantom.z[None, :] ** 2)


def n_time_samples(array: ArrayGeometry, pulse: PulseWaveform, cfg: AcquisitionConfig,
                   max_tx_delay: float = 0.0) -> int:
    """Record length covering every echo from within ``depth_max`` of the origin."""
    half = 0.5 * array.aperture
    t_end = 2.0 * (cfg.depth_max + half) / cfg.c + max_tx_delay + pulse.duration
    return int(math.ceil(t_end * cfg.fs)) + 2


def _check_coverage(max_onset, pulse, cfg, n_time):
    if max_onset + pulse.duration > (n_time - 1) / cfg.fs:
        raise ConfigurationError(
            f"echo ending at {1e6 * (max_onset + pulse.duration):.2f} us exceeds the "
            f"{1e6 * (n_time - 1) / cfg.fs:.2f} us record; increase depth_max")


def _spreading(dist_t, dist_r):
    return 1.0 / np.sqrt(dist_t * dist_r)


def _check_fs(pulse, cfg):
    if pulse.fs != cfg.fs:
        raise InvalidArgument("pulse and acquisition sampling rates differ")


def _simulate_pairs(phantom, array, pulse, cfg, tx_rows, rx_rows, spreading):
    _check_fs(pulse, cfg)
    n_time = n_time_samples(array, pulse, cfg)
    out = np.zeros((len(tx_rows), n_time))
    if len(phantom) == 0 or len(tx_rows) == 0:
        return out
    dist = _distances(phantom, array)
    max_onset = (dist[tx_rows].max(axis=0) + dist[rx_rows].max(axis=0)).max() / cfg.c
    _check_coverage(max_onset, pulse, cfg, n_time)
    amps = np.broadcast_to(phantom.amplitude, (len(tx_rows), len(phantom)))
    if spreading:
        amps = amps * _spreading(dist[tx_rows], dist[rx_rows])
    amps = np.ascontiguousarray(amps, dtype=float)
    _bistatic_kernel(out, dist, amps, np.asarray(tx_rows, np.int64),
                     np.asarray(rx_rows, np.int64), cfg.c, cfg.fs, pulse.f0,
                     pulse.duration, pulse.window == HANN)
    return out


def simulate_sta(phantom: Phantom, array: ArrayGeometry, pulse: PulseWaveform,
                 cfg: AcquisitionConfig, tx_indices=None, spreading=False) -> STAChannelData:
    """Full synthetic-transmit-aperture data set.

    ``tx_indices`` restricts the transmit events (all elements by default).
    """
    n = array.n_elements
    tx = np.arange(n) if tx_indices is None else np.asarray(tx_indices, dtype=np.int64)
    if tx.size and (tx.min() < 0 or tx.max() >= n):
        raise InvalidArgument("transmit index out of range")
    tx_rows = np.repeat(tx, n)
    rx_rows = np.tile(np.arange(n), len(tx))
    out = _simulate_pairs(phantom, array, pulse, cfg, tx_rows, rx_rows, spreading)
    return STAChannelData(samples=out.reshape(len(tx), n, -1), fs=cfg.fs,
                          tx_index=tx, rx_index=np.arange(n))


def simulate_sa(phantom: Phantom, array: ArrayGeometry, pulse: PulseWaveform,
                cfg: AcquisitionConfig, spreading=False) -> SAChannelData:
    """Monostatic data; bit-identical to the diagonal of :func:`simulate_sta`."""
    rows = np.arange(array.n_elements)
    out = _simulate_pairs(phantom, array, pulse, cfg, rows, rows, spreading)
    return SAChannelData(samples=out, fs=cfg.fs)


def focal_law(array: ArrayGeometry, angle: float, focus_depth: float, c: float):
    """Relative transmit delays focusing at ``focus_depth`` along ``angle``.

    The earliest-firing element has delay 0.
    """
    fx = focus_depth * math.sin(angle)
    fz = focus_depth * math.cos(angle)
    d = np.sqrt((fx - array.element_x) ** 2 + fz ** 2)
    return (d.max() - d) / c


def focal_law_offset(array: ArrayGeometry, angle: float, focus_depth: float, c: float):
    """Time at which the focused wave passes a virtual source at the origin.

    Arrival at range R along the line is ``offset + R / c``.
    """
    fx = focus_depth * math.sin(angle)
    fz = focus_depth * math.cos(angle)
    d = np.sqrt((fx - array.element_x) ** 2 + fz ** 2)
    return (d.max() - focus_depth) / c


def simulate_pa(phantom: Phantom, array: ArrayGeometry, pulse: PulseWaveform,
                cfg: AcquisitionConfig, angles=None, spreading=False) -> PAChannelData:
    """Phased-array acquisition, one focused transmit per scan line.

    No transmit or receive apodization is applied.
    """
    _check_fs(pulse, cfg)
    angles = cfg.line_angles if angles is None else np.atleast_1d(np.asarray(angles, float))
    n = array.n_elements
    delays = np.array([focal_law(array, a, cfg.tx_focus_depth, cfg.c) for a in angles])
    delays = delays.reshape(len(angles), n)
    max_delay = float(delays.max()) if delays.size else 0.0
    n_time = n_time_samples(array, pulse, cfg, max_delay)
    out = np.zeros((len(angles), n, n_time))
    rx = np.arange(n)
    if len(phantom):
        dist = _distances(phantom, array)
        max_onset = max_delay + 2.0 * dist.max() / cfg.c
        _check_coverage(max_onset, pulse, cfg, n_time)
        if spreading:
            amps = phantom.amplitude * _spreading(dist[:, None, :], dist[None, :, :])
        else:
            amps = np.broadcast_to(phantom.amplitude, (n, n, len(phantom)))
        amps = np.ascontiguousarray(amps, dtype=float)
        _focused_kernel(out, dist, amps, np.ascontiguousarray(delays), rx, cfg.c, cfg.fs,
                        pulse.f0, pulse.duration, pulse.window == HANN)
    return PAChannelData(samples=out, fs=cfg.fs, line_angles=np.asarray(angles, float),
                         tx_delays=delays, tx_focus_depth=cfg.tx_focus_depth, rx_index=rx)


def subset_indices(n_rx: int, factor: int, mode: str = "stride") -> np.ndarray:
    if factor not in RECEIVE_FACTORS:
        raise InvalidArgument(f"receive factor must be one of {RECEIVE_FACTORS}, got {factor}")
    if factor > 1 and n_rx <= factor:
        raise InvalidArgument(f"cannot reduce {n_rx} receive channels by {factor}")
    n_keep = (n_rx - 1) // factor + 1
    if mode == "stride":
        return np.arange(0, n_rx, factor)
    if mode == "center":
        start = (n_rx - n_keep) // 2
        return np.arange(start, start + n_keep)
    raise InvalidArgument(f"unknown subset mode {mode!r}")


def receive_subset(data, factor: int, mode: str = "stride"):
    """Keep a subset of receive channels.

    ``stride`` keeps every ``factor``-th channel (aperture extent preserved);
    ``center`` keeps the same number of contiguous central channels.
    """
    if isinstance(data, SAChannelData):
        raise InvalidArgument("SA data has no separate receive dimension")
    keep = subset_indices(data.samples.shape[1], factor, mode)
    samples = data.samples[:, keep, :]
    if isinstance(data, STAChannelData):
        return STAChannelData(samples=samples, fs=data.fs, tx_index=data.tx_index,
                              rx_index=data.rx_index[keep])
    if isinstance(data, PAChannelData):
        return PAChannelData(samples=samples, fs=data.fs, line_angles=data.line_angles,
                             tx_delays=data.tx_delays, tx_focus_depth=data.tx_focus_depth,
                             rx_index=data.rx_index[keep])
    raise InvalidArgument(f"unsupported channel data type {type(data).__name__}")
