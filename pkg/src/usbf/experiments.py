"""Experiment drivers shared by the command line and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .array import Rect, make_cyst_phantom, make_point_phantom
from .beamform import SectorGrid, das_pa, das_sa, das_sta
from .config import ExperimentConfig
from .dataset import PairSpec, build_dataset, technique_of
from .errors import InvalidArgument
from .metrics import cnr, cr, cyst_regions, fwhm, lateral_profile, rms_sidelobe
from .nn import PatchShape, init_network, train
from .pipeline import dnnb_reconstruct
from .sim import receive_subset, simulate_pa, simulate_sa, simulate_sta


@dataclass
class Setup:
    """Resolved physical objects of an :class:`ExperimentConfig`."""

    config: ExperimentConfig

    def __post_init__(self):
        self.small, self.large = self.config.arrays()
        self.pulse = self.config.pulse_waveform()
        self.acq = self.config.acquisition_config()
        self.eval_acq = self.config.acquisition_config(self.config.experiment.eval_lines)

    @property
    def technique(self):
        return self.config.experiment.technique

    def pair_spec(self, technique=None) -> PairSpec:
        return PairSpec(self.small, self.large, self.pulse, self.acq,
                        technique or self.technique, self.config.dataset.patch_length)

    @property
    def tx_offset(self):
        return (self.large.n_elements - self.small.n_elements) // 2

    def simulate(self, phantom, technique=None, large=False, acq=None):
        """Channel data of ``phantom``; large-array STA fires the co-located elements."""
        technique = technique or self.technique
        acq = self.acq if acq is None else acq
        array = self.large if large else self.small
        if technique == "sa":
            return simulate_sa(phantom, array, self.pulse, acq)
        if technique == "sta":
            tx = np.arange(self.small.n_elements) + (self.tx_offset if large else 0)
            return simulate_sta(phantom, array, self.pulse, acq, tx_indices=tx)
        if technique == "pa":
            return simulate_pa(phantom, array, self.pulse, acq)
        raise InvalidArgument(f"unknown technique {technique!r}")

    def das(self, data, large=False, grid=None, acq=None):
        acq = self.acq if acq is None else acq
        array = self.large if large else self.small
        interp = self.config.experiment.interp
        tech = technique_of(data)
        if tech == "sa":
            return das_sa(data, array, acq, grid, self.pulse, interp)
        if tech == "sta":
            return das_sta(data, array, acq, grid, self.pulse, interp)
        depths = None if grid is None else grid.depths
        return das_pa(data, array, acq, depths, self.pulse, interp)

    def dnnb(self, data, net, grid=None, acq=None):
        acq = self.acq if acq is None else acq
        return dnnb_reconstruct(data, net, self.small, self.large, acq, grid, self.pulse)

    # scenes --------------------------------------------------------------

    def point_target(self):
        e = self.config.experiment
        return (e.point_x_mm * 1e-3, e.point_z_mm * 1e-3)

    def window_grid(self, center_z, half_mm=None, acq=None):
        """Sector grid restricted to depths within ``half_mm`` of ``center_z``."""
        acq = self.eval_acq if acq is None else acq
        half = (self.config.experiment.window_mm if half_mm is None else half_mm) * 1e-3
        depths = acq.depth_axis()
        keep = np.abs(depths - center_z) <= half
        if not keep.any():
            raise InvalidArgument("evaluation window lies outside the depth range")
        return SectorGrid(acq.line_angles, depths[keep])

    def cyst_phantom(self, seed=None):
        e = self.config.experiment
        cx, cz = e.cyst_x_mm * 1e-3, e.cyst_z_mm * 1e-3
        region = Rect(cx - e.cyst_half_width_mm * 1e-3, cx + e.cyst_half_width_mm * 1e-3,
                      cz - e.cyst_half_depth_mm * 1e-3, cz + e.cyst_half_depth_mm * 1e-3)
        seed = e.seed if seed is None else seed
        return make_cyst_phantom(region, (cx, cz), e.cyst_radius_mm * 1e-3,
                                 e.cyst_scatterers, seed)

    def cyst_geometry(self):
        e = self.config.experiment
        return (e.cyst_x_mm * 1e-3, e.cyst_z_mm * 1e-3), e.cyst_radius_mm * 1e-3


def point_images(setup: Setup, net=None, technique=None, target=None):
    """DAS (small and large) and optional DNNB images of one point target."""
    technique = technique or setup.technique
    x0, z0 = setup.point_target() if target is None else target
    acq = setup.eval_acq
    grid = setup.window_grid(z0, acq=acq)
    ph = make_point_phantom([(x0, z0, 1.0)])
    small = setup.simulate(ph, technique, acq=acq)
    large = setup.simulate(ph, technique, large=True, acq=acq)
    out = {"das_small": setup.das(small, grid=grid, acq=acq),
           "das_large": setup.das(large, large=True, grid=grid, acq=acq)}
    if net is not None:
        out["dnnb_small"] = setup.dnnb(small, net, grid, acq)
    return out


def point_metrics_row(setup: Setup, img, depth):
    """FWHM and RMS sidelobe level of the depth-window lateral projection."""
    half = setup.config.experiment.profile_half_window_mm * 1e-3
    profile = lateral_profile(img, depth, half)
    return fwhm(profile), rms_sidelobe(profile)


def cyst_metrics(img, center, radius):
    mc, mb = cyst_regions(img, center, radius)
    return cr(img, mc, mb), cnr(img, mc, mb)


def cyst_images(setup: Setup, net=None, technique=None, factor=1, phantom=None):
    """Small-array DAS and DNNB images of the cyst phantom.

    ``factor`` keeps every ``factor``-th receive channel (STA and PA only).
    """
    technique = technique or setup.technique
    center, radius = setup.cyst_geometry()
    acq = setup.acq
    grid = setup.window_grid(center[1], 2.0 * radius * 1e3 + 1.0, acq=acq)
    phantom = setup.cyst_phantom() if phantom is None else phantom
    data = setup.simulate(phantom, technique, acq=acq)
    if factor != 1:
        data = receive_subset(data, factor, setup.config.experiment.subset_mode)
    out = {"das_small": setup.das(data, grid=grid, acq=acq)}
    if net is not None:
        out["dnnb_small"] = setup.dnnb(data, net, grid, acq)
    return out


def depth_sweep_rows(setup: Setup, net=None, technique=None):
    """Rows ``(method, depth_mm, fwhm_mm, rms_sll_db)`` over the configured depths."""
    rows = []
    x0 = setup.config.experiment.point_x_mm * 1e-3
    for depth_mm in setup.config.experiment.sweep_depths_mm:
        z0 = depth_mm * 1e-3
        images = point_images(setup, net, technique, (x0, z0))
        for method, img in images.items():
            w, sll = point_metrics_row(setup, img, z0)
            rows.append((method, float(depth_mm), w, sll))
    return rows


def train_network(setup: Setup, dataset, log=None, factor=1):
    """Fresh network trained on ``dataset`` (channel stride ``factor``)."""
    ds = dataset.subset_channels(factor)
    n_in, n_time = ds.inputs.shape[1:]
    if ds.targets.shape[1] != 2 * n_in - 1:
        raise InvalidArgument("dataset targets do not have 2 n - 1 channels")
    n = setup.config.network
    net = init_network(PatchShape(n_in, n_time), setup.config.experiment.seed,
                       n.dense_widths, n.conv_channels, n.leaky_slope)
    net, history, _ = train(net, ds.inputs, ds.targets, setup.config.train_config(), log)
    return net, history


def make_dataset(setup: Setup, log=None, technique=None):
    d = setup.config.dataset
    return build_dataset(d.n_pairs, d.mix, setup.config.experiment.seed,
                         setup.pair_spec(technique), log)


def aperture_sweep_rows(setup: Setup, nets: dict, technique=None):
    """Rows ``(factor, n_rx, method, cr_db, cnr)`` on the cyst phantom.

    ``nets`` maps each receive factor to its network (or ``None`` for DAS only).
    """
    technique = technique or setup.technique
    if technique == "sa":
        raise InvalidArgument("the aperture sweep needs a receive dimension (sta or pa)")
    center, radius = setup.cyst_geometry()
    phantom = setup.cyst_phantom()
    rows = []
    for factor in setup.config.experiment.receive_factors:
        images = cyst_images(setup, nets.get(factor), technique, factor, phantom)
        n_rx = len(range(0, setup.small.n_elements, factor))
        for method, img in images.items():
            c_r, c_n = cyst_metrics(img, center, radius)
            rows.append((factor, n_rx, method, c_r, c_n))
    return rows


def with_overrides(cfg: ExperimentConfig, **sections):
    """Copy of ``cfg`` with ``section={key: value}`` replacements."""
    out = replace(cfg)
    for name, values in sections.items():
        setattr(out, name, replace(getattr(cfg, name), **values))
    return out.validate()

