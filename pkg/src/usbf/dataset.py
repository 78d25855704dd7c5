"""Training pairs: focused small-aperture patches and their large-aperture targets.

A focused patch holds, for one focal point, every receive channel read at its
geometric delay plus ``T`` sample offsets centred on column ``T // 2``. Both
patches of a pair are divided by the input patch's max-abs value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .array import AcquisitionConfig, ArrayGeometry, PulseWaveform, make_point_phantom
from .beamform import ChannelReader, analytic_signal
from .errors import FormatError, InvalidArgument
from .io import decode_records, encode_records
from .sim import (PAChannelData, SAChannelData, STAChannelData, focal_law_offset,
                  simulate_pa, simulate_sa, simulate_sta)

TECHNIQUES = ("sa", "sta", "pa")
EMULATION, SIDELOBE = "emulation", "sidelobe"
KINDS = (EMULATION, SIDELOBE)


@dataclass(frozen=True)
class FocusedPatch:
    values: np.ndarray  # [n_channels, T]
    focal_point: tuple  # (theta, R)
    scale: float


@dataclass(frozen=True)
class TrainingPair:
    input: FocusedPatch
    target: FocusedPatch
    kind: str
    tx: int = 0


def technique_of(data) -> str:
    if isinstance(data, SAChannelData):
        return "sa"
    if isinstance(data, STAChannelData):
        return "sta"
    if isinstance(data, PAChannelData):
        return "pa"
    raise InvalidArgument(f"unsupported channel data type {type(data).__name__}")


class Focuser:
    """Reads focused patches from one channel data set.

    ``event`` selects the transmit row (STA) or scan line (PA); SA ignores it.
    """

    def __init__(self, data, array: ArrayGeometry, cfg: AcquisitionConfig, pulse=None,
                 n_time: int = 32, interp: str = "baseband"):
        if n_time < 1:
            raise InvalidArgument("patch length must be positive")
        self.technique = technique_of(data)
        self.data = data
        self.array = array
        self.cfg = cfg
        self.n_time = n_time
        self.center = n_time // 2
        self.offsets = (np.arange(n_time) - self.center) / data.fs
        self.reader = ChannelReader(analytic_signal(data.samples, axis=-1), data.fs, pulse, interp)
        if self.technique == "sa":
            self.rx = np.arange(array.n_elements)
        else:
            self.rx = np.asarray(data.rx_index)
        if len(self.rx) and self.rx.max() >= array.n_elements:
            raise InvalidArgument("channel data has more elements than the array")

    @property
    def n_channels(self):
        return len(self.rx)

    @property
    def n_events(self):
        return 1 if self.technique == "sa" else self.data.samples.shape[0]

    def delays(self, x, z, event=0):
        """Path delays ``[n_channels, B]`` of focal points ``(x, z)``."""
        x = np.atleast_1d(np.asarray(x, float))
        z = np.atleast_1d(np.asarray(z, float))
        c = self.cfg.c
        ex = self.array.element_x
        d_rx = np.hypot(x[None, :] - ex[self.rx][:, None], z[None, :])
        if self.technique == "sa":
            return 2.0 * d_rx / c
        if self.technique == "sta":
            t = self.data.tx_index[event]
            return (np.hypot(x - ex[t], z)[None, :] + d_rx) / c
        theta = self.data.line_angles[event]
        t_tx = focal_law_offset(self.array, theta, self.data.tx_focus_depth, c) + np.hypot(x, z) / c
        return t_tx[None, :] + d_rx / c

    def _channel(self, event, b):
        if self.technique == "sa":
            return b
        return (event, b)

    def patches(self, x, z, event=0, strict=False):
        """Real focused patches ``[B, n_channels, T]`` and the in-range mask."""
        delays = self.delays(x, z, event)
        out = np.empty((delays.shape[1], self.n_channels, self.n_time))
        ok = np.ones(out.shape, dtype=bool)
        for b in range(self.n_channels):
            v, inside = self.reader(self._channel(event, b),
                                    delays[b][:, None] + self.offsets[None, :])
            out[:, b] = v.real
            ok[:, b] = inside
        if strict and not ok.all():
            raise InvalidArgument("focal point outside the recorded time coverage")
        return out, ok


def focus_channels(data, focal_point, array: ArrayGeometry, cfg: AcquisitionConfig,
                   n_time: int = 32, pulse=None, event: int = 0,
                   interp: str = "baseband") -> FocusedPatch:
    """Delay every channel to the focal point ``(theta, R)`` and cut ``n_time`` columns.

    The echo path through the focal point lands on column ``n_time // 2``.
    """
    theta, r = focal_point
    foc = Focuser(data, array, cfg, pulse, n_time, interp)
    values, _ = foc.patches(r * math.sin(theta), r * math.cos(theta), event, strict=True)
    return FocusedPatch(values[0], (float(theta), float(r)), 1.0)


# pair generation ---------------------------------------------------------------

@dataclass(frozen=True)
class PairSpec:
    """Everything needed to generate pairs for one technique."""

    small: ArrayGeometry
    large: ArrayGeometry
    pulse: PulseWaveform
    cfg: AcquisitionConfig
    technique: str = "sa"
    n_time: int = 32

    def __post_init__(self):
        if self.technique not in TECHNIQUES:
            raise InvalidArgument(f"unknown technique {self.technique!r}; expected {TECHNIQUES}")
        if self.large.n_elements != 2 * self.small.n_elements - 1:
            raise InvalidArgument("large array must have 2 n - 1 elements")
        if not math.isclose(self.small.pitch, self.large.pitch):
            raise InvalidArgument("paired arrays must share the pitch")

    @property
    def tx_offset(self):
        return (self.large.n_elements - self.small.n_elements) // 2

    @property
    def wavelength(self):
        return self.cfg.c / self.pulse.f0

    @property
    def min_offset_angle(self):
        """First-null angle of the small aperture, ``asin(lambda / D)``."""
        return math.asin(min(1.0, self.wavelength / self.small.width))

    @property
    def sim_cfg(self):
        # records long enough for every patch read near depth_max
        margin = (self.n_time + self.pulse.samples.size) * self.cfg.c / self.cfg.fs
        return replace(self.cfg, depth_max=self.cfg.depth_max + margin)


def _simulate(spec: PairSpec, phantom, array, theta, tx):
    cfg = spec.sim_cfg
    if spec.technique == "sa":
        return simulate_sa(phantom, array, spec.pulse, cfg)
    if spec.technique == "sta":
        return simulate_sta(phantom, array, spec.pulse, cfg, tx_indices=[tx])
    return simulate_pa(phantom, array, spec.pulse, cfg, angles=[theta])


def _polar(theta, r, amp=1.0):
    return (r * math.sin(theta), r * math.cos(theta), amp)


def scene_pair(spec: PairSpec, focal_point, mains, interferers=(), tx: int = 0) -> TrainingPair:
    """One pair from explicit scatterer lists of ``(theta, R, amplitude)``.

    ``mains`` appear in both patches, ``interferers`` in the input only. ``tx``
    is a small-array transmit element (STA).
    """
    theta, r = focal_point
    mains = [_polar(*m) for m in mains]
    kind = SIDELOBE if len(interferers) else EMULATION
    small = _simulate(spec, make_point_phantom(mains + [_polar(*i) for i in interferers]),
                      spec.small, theta, tx)
    large = _simulate(spec, make_point_phantom(mains), spec.large, theta, tx + spec.tx_offset)
    x, z = r * math.sin(theta), r * math.cos(theta)
    cfg = spec.sim_cfg
    p_in, _ = Focuser(small, spec.small, cfg, spec.pulse, spec.n_time).patches(x, z, strict=True)
    p_out, _ = Focuser(large, spec.large, cfg, spec.pulse, spec.n_time).patches(x, z, strict=True)
    peak = float(np.max(np.abs(p_in)))
    scale = peak if peak > 0 else 1.0
    fp = (float(theta), float(r))
    return TrainingPair(FocusedPatch(p_in[0] / scale, fp, scale),
                        FocusedPatch(p_out[0] / scale, fp, scale), kind, tx)


def make_pair(spec: PairSpec, focal_point, main_offset=(0.0, 0.0), interferer=None,
              tx: int = 0, main_amplitude: float = 1.0) -> TrainingPair:
    """One point-target pair.

    ``main_offset`` is ``(d_theta, d_R)`` of the main target from the focal
    point. ``interferer`` is ``(theta, R, amplitude)`` or ``None``; it is
    present in the input only.
    """
    theta, r = focal_point
    main = (theta + main_offset[0], r + main_offset[1], main_amplitude)
    return scene_pair(spec, focal_point, [main], [] if interferer is None else [interferer], tx)


# fraction of sidelobe pairs without a main target
LONE_FRACTION = 0.5
# fraction of pairs of either kind drawn as multi-scatterer scenes
SPECKLE_FRACTION = 0.5
# scatterers per group in a multi-scatterer scene
MAX_SCATTERERS = 8


def _focal_draw(rng, spec):
    half = 0.5 * spec.cfg.sector_angle
    theta = rng.uniform(-half, half)
    r = rng.uniform(spec.cfg.depth_min, spec.cfg.depth_max)
    tx = int(rng.integers(spec.small.n_elements)) if spec.technique == "sta" else 0
    return theta, r, tx


def _range_jitter(spec):
    return 0.5 * spec.n_time * spec.cfg.depth_step


def _mainlobe_scatterers(rng, spec, theta, r, n):
    a, dr = spec.min_offset_angle, _range_jitter(spec)
    return [(theta + rng.uniform(-a, a), r + rng.uniform(-dr, dr), rng.standard_normal())
            for _ in range(n)]


def _sidelobe_scatterers(rng, spec, theta, r, n):
    lo = spec.min_offset_angle
    hi = max(lo, 0.5 * spec.cfg.sector_angle)
    dr = _range_jitter(spec)
    return [(theta + rng.uniform(lo, hi) * (1.0 if rng.random() < 0.5 else -1.0),
             r + rng.uniform(-dr, dr), rng.standard_normal()) for _ in range(n)]


def gen_speckle_pair(rng, spec: PairSpec, sidelobe: bool) -> TrainingPair:
    """Several random-amplitude scatterers, as in a speckle region.

    Mainlobe scatterers fill the small aperture's mainlobe and half a patch in
    range. With ``sidelobe`` further scatterers sit in the sidelobe zone, and a
    fraction ``LONE_FRACTION`` of such scenes has no mainlobe scatterer.
    """
    theta, r, tx = _focal_draw(rng, spec)
    n_main = int(rng.integers(1, MAX_SCATTERERS + 1))
    side = []
    if sidelobe:
        if rng.random() < LONE_FRACTION:
            n_main = 0
        side = _sidelobe_scatterers(rng, spec, theta, r, int(rng.integers(1, MAX_SCATTERERS + 1)))
    return scene_pair(spec, (theta, r), _mainlobe_scatterers(rng, spec, theta, r, n_main), side, tx)


def gen_emulation_pair(rng, spec: PairSpec, jitter: bool = True) -> TrainingPair:
    """Single point target near a random focal point.

    With ``jitter`` the target is displaced from the focal point within the
    small aperture's mainlobe and half a patch in range, so the network sees
    the off-focus response it must sharpen.
    """
    theta, r, tx = _focal_draw(rng, spec)
    offset = (0.0, 0.0)
    if jitter:
        a = spec.min_offset_angle
        offset = (rng.uniform(-a, a), rng.uniform(-1, 1) * _range_jitter(spec))
    return make_pair(spec, (theta, r), offset, tx=tx)


def gen_sidelobe_pair(rng, spec: PairSpec) -> TrainingPair:
    """Main target at the focal point plus an interferer in the small array's sidelobes.

    A fraction ``LONE_FRACTION`` of the pairs drops the main target (the zero
    amplitude limit), teaching a zero output where only sidelobe energy arrives.
    """
    theta, r, tx = _focal_draw(rng, spec)
    lo = spec.min_offset_angle
    hi = max(lo, 0.5 * spec.cfg.sector_angle)
    d_theta = rng.uniform(lo, hi) * (1.0 if rng.random() < 0.5 else -1.0)
    d_r = rng.uniform(-1, 1) * _range_jitter(spec)
    amp = 10.0 ** (rng.uniform(-6.0, 6.0) / 20.0)
    main = 0.0 if rng.random() < LONE_FRACTION else 1.0
    return make_pair(spec, (theta, r), interferer=(theta + d_theta, r + d_r, amp), tx=tx,
                     main_amplitude=main)


def gen_pair(seed, index, spec: PairSpec, mix: float) -> TrainingPair:
    """Pair ``index`` of a dataset; a pure function of ``(seed, index)``."""
    rng = np.random.default_rng([seed, index])
    sidelobe = rng.random() < mix
    if rng.random() < SPECKLE_FRACTION:
        return gen_speckle_pair(rng, spec, sidelobe)
    if sidelobe:
        return gen_sidelobe_pair(rng, spec)
    return gen_emulation_pair(rng, spec)


# dataset container -----------------------------------------------------------

@dataclass
class Dataset:
    inputs: np.ndarray   # [N, n_small, T], float32
    targets: np.ndarray  # [N, 2 n_small - 1, T], float32
    meta: np.ndarray     # [N, 5]: kind, theta, R, scale, tx
    header: dict

    def __len__(self):
        return len(self.inputs)

    @property
    def kinds(self):
        return [KINDS[int(k)] for k in self.meta[:, 0]]

    def subset_channels(self, factor: int):
        """Stride-``factor`` channel subsets of inputs and targets, renormalized."""
        if factor == 1:
            return self
        x = self.inputs[:, ::factor]
        y = self.targets[:, ::factor]
        peak = np.max(np.abs(x.reshape(len(x), -1)), axis=1)
        peak = np.where(peak > 0, peak, 1.0).astype(np.float32)
        meta = self.meta.copy()
        meta[:, 3] *= peak
        return Dataset(x / peak[:, None, None], y / peak[:, None, None], meta,
                       dict(self.header, channel_stride=str(factor)))


def build_dataset(n_pairs: int, mix: float, seed: int, spec: PairSpec, log=None) -> Dataset:
    """Generate ``n_pairs`` pairs in index order."""
    if n_pairs < 1:
        raise InvalidArgument("need at least one pair")
    if not 0.0 <= mix <= 1.0:
        raise InvalidArgument("mix must lie in [0, 1]")
    n_s, n_l, t = spec.small.n_elements, spec.large.n_elements, spec.n_time
    inputs = np.empty((n_pairs, n_s, t), np.float32)
    targets = np.empty((n_pairs, n_l, t), np.float32)
    meta = np.empty((n_pairs, 5), np.float32)
    for i in range(n_pairs):
        p = gen_pair(seed, i, spec, mix)
        inputs[i] = p.input.values
        targets[i] = p.target.values
        meta[i] = (KINDS.index(p.kind), *p.input.focal_point, p.input.scale, p.tx)
        if log is not None and (i + 1) % 1000 == 0:
            log(f"generated {i + 1}/{n_pairs} pairs")
    header = {"technique": spec.technique, "n_pairs": str(n_pairs), "mix": repr(mix),
              "seed": str(seed), "n_small": str(n_s), "n_large": str(n_l),
              "patch_length": str(t)}
    return Dataset(inputs, targets, meta, header)


_END = b"END\n"


def encode_dataset(ds: Dataset) -> bytes:
    head = "".join(f"{k} = {v}\n" for k, v in ds.header.items()).encode("ascii") + _END
    records = []
    for i in range(len(ds)):
        records += [ds.inputs[i], ds.targets[i], ds.meta[i]]
    return head + encode_records(records)


def decode_dataset(buf: bytes) -> Dataset:
    end = buf.find(_END)
    if end < 0 or (end > 0 and buf[end - 1:end] != b"\n"):
        raise FormatError("dataset header has no END line", 0)
    header = {}
    for line in buf[:end].decode("ascii", errors="replace").splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"malformed dataset header line {line!r}", 0)
        header[key.strip()] = value.strip()
    records, pos = decode_records(buf, end + len(_END))
    if pos != len(buf):
        raise FormatError("trailing bytes after dataset records", pos)
    if len(records) % 3:
        raise FormatError("dataset record count is not a multiple of 3", end + len(_END))
    n = len(records) // 3
    if n == 0:
        raise FormatError("dataset holds no pairs", end + len(_END))
    try:
        inputs = np.stack(records[0::3])
        targets = np.stack(records[1::3])
        meta = np.stack(records[2::3])
    except ValueError:
        raise FormatError("dataset pairs differ in shape", end + len(_END)) from None
    if (inputs.ndim != 3 or targets.ndim != 3 or meta.shape != (n, 5)
            or targets.shape[1] != 2 * inputs.shape[1] - 1
            or targets.shape[2] != inputs.shape[2]):
        raise FormatError(f"inconsistent dataset shapes {inputs.shape}, {targets.shape}, "
                          f"{meta.shape}", end + len(_END))
    return Dataset(inputs, targets, meta, header)


def save_dataset(ds: Dataset, path):
    with open(path, "wb") as fh:
        fh.write(encode_dataset(ds))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return decode_dataset(fh.read())
