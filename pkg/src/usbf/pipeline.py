"""Network-based reconstruction: focus small-aperture data, emulate, sum, detect.

For every focal sample the small-aperture patch is normalized by its max-abs,
mapped to emulated large-aperture channels, and the centre column of the
emulated channels is summed and denormalized. The envelope of the resulting
focused RF line is taken along depth with the analytic signal.
"""

from __future__ import annotations

import numpy as np

from .array import AcquisitionConfig, ArrayGeometry
from .beamform import SectorGrid, SectorImage, analytic_signal
from .dataset import Focuser, technique_of
from .errors import InvalidArgument
from .nn import Network, forward_column


class NetworkMapper:
    """Emulated centre columns from a trained network."""

    def __init__(self, net: Network):
        self.net = net

    def shape_check(self, n_in, n_out, n_time):
        if tuple(self.net.in_shape) != (n_in, n_time) or self.net.out_shape[0] != n_out:
            raise InvalidArgument(f"network maps {tuple(self.net.in_shape)} -> "
                                  f"{tuple(self.net.out_shape)}, data needs "
                                  f"({n_in}, {n_time}) -> ({n_out}, {n_time})")

    def __call__(self, patches, ctx):
        return forward_column(self.net, patches, patches.shape[-1] // 2).astype(float)


class OracleMapper:
    """Ground-truth emulation: centre columns focused from large-array data.

    ``large_data`` must be acquired with the same events as the small data
    (co-located STA transmit elements, identical PA scan lines).
    """

    def __init__(self, large_data, large_array, cfg, pulse=None, n_time=32):
        self.focuser = Focuser(large_data, large_array, cfg, pulse, n_time)

    def shape_check(self, n_in, n_out, n_time):
        if self.focuser.n_channels != n_out:
            raise InvalidArgument("oracle data does not match the emulated channel count")

    def __call__(self, patches, ctx):
        cols, _ = self.focuser.patches(ctx["x"], ctx["z"], ctx["event"])
        return cols[:, :, self.focuser.center] / ctx["scale"][:, None]


def _as_mapper(net):
    if isinstance(net, Network):
        return NetworkMapper(net)
    if callable(net):
        return net
    raise InvalidArgument("net must be a Network or a mapper callable")


def dnnb_reconstruct(data, net, array_small: ArrayGeometry, array_large: ArrayGeometry,
                     cfg: AcquisitionConfig, grid: SectorGrid | None = None, pulse=None,
                     n_time: int | None = None, technique: str | None = None,
                     batch_size: int = 4096, envelope: bool = True) -> SectorImage:
    """Reconstruct a sector image from small-aperture data through an emulator.

    ``net`` is a :class:`Network` or a mapper ``(patches, ctx) -> [B, n_out]``.
    ``technique``, when given, must match the data type.
    """
    tech = technique_of(data)
    if technique is not None and technique != tech:
        raise InvalidArgument(f"network trained for {technique!r}, data is {tech!r}")
    if isinstance(net, Network):
        n_time = net.in_shape[1] if n_time is None else n_time
    n_time = 32 if n_time is None else n_time
    mapper = _as_mapper(net)
    if tech == "pa":
        depths = cfg.depth_axis() if grid is None else grid.depths
        grid = SectorGrid(np.asarray(data.line_angles, float), np.asarray(depths, float))
    elif grid is None:
        grid = SectorGrid.from_config(cfg)
    foc = Focuser(data, array_small, cfg, pulse, n_time)
    n_out = 2 * foc.n_channels - 1
    if hasattr(mapper, "shape_check"):
        mapper.shape_check(foc.n_channels, n_out, n_time)

    x, z = grid.points()
    x, z = x.ravel(), z.ravel()
    line = np.repeat(np.arange(len(grid.angles)), len(grid.depths))
    rf = np.zeros(x.size)
    hits = np.zeros(x.size)
    for event in range(foc.n_events):
        # PA events are scan lines and only focus their own line
        sel = np.flatnonzero(line == event) if tech == "pa" else np.arange(x.size)
        for lo in range(0, sel.size, batch_size):
            idx = sel[lo:lo + batch_size]
            patches, ok = foc.patches(x[idx], z[idx], event)
            hits[idx] += ok[:, :, foc.center].mean(axis=1)
            peak = np.max(np.abs(patches.reshape(len(idx), -1)), axis=1)
            scale = np.where(peak > 0, peak, 1.0)
            ctx = {"x": x[idx], "z": z[idx], "event": event, "scale": scale}
            cols = np.asarray(mapper(patches / scale[:, None, None], ctx), float)
            if cols.shape != (len(idx), n_out):
                raise InvalidArgument(f"mapper returned shape {cols.shape}, "
                                      f"expected {(len(idx), n_out)}")
            rf[idx] += np.where(peak > 0, cols.sum(axis=1) * scale, 0.0)
    rf = rf.reshape(grid.shape)
    n_ev = 1 if tech == "pa" else foc.n_events
    coverage = hits.reshape(grid.shape) / n_ev
    if envelope:
        values = np.abs(analytic_signal(rf, axis=1)) if rf.shape[1] >= 2 else np.abs(rf)
    else:
        values = rf
    return SectorImage(values, np.asarray(grid.angles, float), np.asarray(grid.depths, float),
                       coverage)

