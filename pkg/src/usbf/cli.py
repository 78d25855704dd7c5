"""Command-line driver.

Every command writes the resolved configuration to ``config.ini`` in its output
directory. Exit codes: 0 success, 1 runtime error, 2 usage error. Set
``USBF_THREADS`` to bound the numeric libraries' thread count.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .array import make_point_phantom
from .beamform import SectorGrid, SectorImage, log_compress, scan_convert
from .config import load_config, preset
from .dataset import load_dataset, save_dataset
from .errors import ConfigurationError, FormatError, InvalidArgument, MeasurementFailed
from .experiments import (Setup, aperture_sweep_rows, cyst_metrics, depth_sweep_rows,
                          make_dataset, point_metrics_row, train_network)
from .io import read_records, read_tensor, write_pgm, write_records, write_tensor
from .metrics import write_csv
from .nn import load_weights, save_weights
from .sim import PAChannelData, SAChannelData, STAChannelData, focal_law


def _setup(args):
    if args.preset and args.config:
        raise ConfigurationError("give either --config or --preset, not both")
    base = preset(args.preset) if args.preset else None
    return Setup(load_config(args.config, args.set or (), base))


def _outdir(path, setup):
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.ini"), "w", encoding="ascii") as fh:
        fh.write(setup.config.to_text())
    return path


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# phantoms and channel data files -------------------------------------------------

def read_phantom(spec, setup):
    """``point``, ``cyst`` or a text file of ``x_mm z_mm amplitude`` lines."""
    if spec == "point":
        x, z = setup.point_target()
        return make_point_phantom([(x, z, 1.0)])
    if spec == "cyst":
        return setup.cyst_phantom()
    rows = []
    try:
        with open(spec, encoding="ascii") as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) not in (2, 3):
                    raise InvalidArgument(f"{spec}:{n}: expected 'x_mm z_mm [amplitude]'")
                vals = [float(p) for p in parts]
                rows.append((vals[0] * 1e-3, vals[1] * 1e-3, vals[2] if len(vals) == 3 else 1.0))
    except ValueError as exc:
        raise InvalidArgument(f"{spec}: {exc}") from exc
    return make_point_phantom(rows)


def channel_data_from_tensor(samples, setup):
    """Rebuild typed channel data from a stored tensor and the configuration."""
    tech = setup.technique
    acq = setup.acq
    n_el = {setup.small.n_elements: setup.small, setup.large.n_elements: setup.large}
    if tech == "sa":
        if samples.ndim != 2 or samples.shape[0] not in n_el:
            raise InvalidArgument(f"SA data must be [elements, time], got {samples.shape}")
        return SAChannelData(samples.astype(float), acq.fs), n_el[samples.shape[0]]
    if samples.ndim != 3 or samples.shape[1] not in n_el:
        raise InvalidArgument(f"{tech.upper()} data must be [event, rx, time], "
                              f"got {samples.shape}")
    array = n_el[samples.shape[1]]
    if tech == "sta":
        offset = setup.tx_offset if array is setup.large else 0
        tx = np.arange(samples.shape[0]) + offset
        return STAChannelData(samples.astype(float), acq.fs, tx, np.arange(array.n_elements)), array
    if samples.shape[0] != acq.n_scan_lines:
        raise InvalidArgument("PA data line count differs from the configured scan lines")
    delays = np.array([focal_law(array, a, acq.tx_focus_depth, acq.c) for a in acq.line_angles])
    return PAChannelData(samples.astype(float), acq.fs, acq.line_angles, delays,
                         acq.tx_focus_depth, np.arange(array.n_elements)), array


def read_image(path):
    recs = read_records(path)
    if len(recs) != 3 or recs[0].ndim != 2:
        raise FormatError("image file must hold values, line angles and depths")
    values, angles, depths = (r.astype(float) for r in recs)
    if values.shape != (len(angles), len(depths)):
        raise FormatError("image axes do not match its values")
    return SectorImage(values, angles, depths)


# commands ------------------------------------------------------------------------

def cmd_simulate(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    phantom = read_phantom(args.phantom, setup)
    data = setup.simulate(phantom, large=args.array == "large")
    write_tensor(os.path.join(out, "channels.usbf"), data.samples)
    _log(f"simulated {len(phantom)} scatterers -> {data.samples.shape}")
    return 0


def cmd_build_dataset(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    ds = make_dataset(setup, _log)
    save_dataset(ds, os.path.join(out, "dataset.usbf"))
    return 0


def cmd_train(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    ds = load_dataset(args.dataset)
    if ds.header.get("technique", setup.technique) != setup.technique:
        raise InvalidArgument(f"dataset built for {ds.header['technique']!r}, "
                              f"config selects {setup.technique!r}")
    net, hist = train_network(setup, ds, _log, args.factor)
    save_weights(net, os.path.join(out, "weights.usbf"))
    write_csv(os.path.join(out, "history.csv"), ("epoch", "train_loss", "val_loss", "lr"),
              hist.rows())
    return 0


def cmd_reconstruct(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    data, array = channel_data_from_tensor(read_tensor(args.data), setup)
    grid = SectorGrid.from_config(setup.acq)
    if args.weights:
        if array is not setup.small:
            raise InvalidArgument("network reconstruction expects small-array data")
        img = setup.dnnb(data, load_weights(args.weights), grid)
    else:
        img = setup.das(data, large=array is setup.large, grid=grid)
    e = setup.config.experiment
    write_records(os.path.join(out, "envelope.usbf"),
                  [img.values, img.line_angles, img.depth_axis])
    disp = log_compress(img, e.dynamic_range_db)
    write_pgm(os.path.join(out, "sector.pgm"), disp.values.T)
    write_pgm(os.path.join(out, "raster.pgm"), scan_convert(disp, e.pixel_mm * 1e-3).pixels)
    return 0


def cmd_evaluate(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    img = read_image(args.image)
    rows = []
    if args.target == "point":
        depth = setup.point_target()[1]
        w, sll = point_metrics_row(setup, img, depth)
        rows += [("fwhm_mm", w), ("rms_sll_db", sll)]
    else:
        center, radius = setup.cyst_geometry()
        c_r, c_n = cyst_metrics(img, center, radius)
        rows += [("cr_db", c_r), ("cnr", c_n)]
    write_csv(os.path.join(out, "metrics.csv"), ("metric", "value"), rows)
    for name, value in rows:
        print(f"{name} {value!r}")
    return 0


def cmd_sweep_depth(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    net = load_weights(args.weights) if args.weights else None
    rows = depth_sweep_rows(setup, net)
    write_csv(os.path.join(out, "depth_sweep.csv"),
              ("method", "depth_mm", "fwhm_mm", "rms_sll_db"), rows)
    return 0


def cmd_sweep_aperture(args):
    setup = _setup(args)
    out = _outdir(args.out, setup)
    nets = {}
    ds = load_dataset(args.dataset) if args.dataset else None
    for factor in setup.config.experiment.receive_factors:
        path = os.path.join(args.weights_dir, f"weights_x{factor}.usbf") if args.weights_dir else None
        if path and os.path.exists(path):
            nets[factor] = load_weights(path)
        elif ds is not None:
            _log(f"training network for receive factor {factor}")
            nets[factor], _ = train_network(setup, ds, _log, factor)
            save_weights(nets[factor], os.path.join(out, f"weights_x{factor}.usbf"))
    rows = aperture_sweep_rows(setup, nets)
    write_csv(os.path.join(out, "aperture_sweep.csv"),
              ("factor", "n_rx", "method", "cr_db", "cnr"), rows)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="usbf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--config", help="configuration file")
        c.add_argument("--preset", choices=("desk", "full"), help="built-in configuration")
        c.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one configuration value")
        c.add_argument("--out", required=True, help="output directory")
        c.set_defaults(func=func)
        return c

    c = command("simulate", cmd_simulate, "simulate channel data")
    c.add_argument("--phantom", default="point", help="'point', 'cyst' or a scatterer file")
    c.add_argument("--array", choices=("small", "large"), default="small")
    command("build-dataset", cmd_build_dataset, "generate training pairs")
    c = command("train", cmd_train, "train an emulation network")
    c.add_argument("--dataset", required=True)
    c.add_argument("--factor", type=int, default=1, choices=(1, 2, 4, 8),
                   help="train on every factor-th channel")
    c = command("reconstruct", cmd_reconstruct, "DAS or network reconstruction")
    c.add_argument("--data", required=True, help="channel data tensor")
    c.add_argument("--weights", help="network weights (network reconstruction)")
    c = command("evaluate", cmd_evaluate, "image-quality metrics")
    c.add_argument("--image", required=True, help="envelope file from reconstruct")
    c.add_argument("--target", choices=("point", "cyst"), default="point")
    c = command("sweep-depth", cmd_sweep_depth, "FWHM and sidelobe level against depth")
    c.add_argument("--weights")
    c = command("sweep-aperture", cmd_sweep_aperture, "CR and CNR against receive factor")
    c.add_argument("--dataset", help="dataset for training missing per-factor networks")
    c.add_argument("--weights-dir", help="directory holding weights_x<factor>.usbf")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgument, ConfigurationError, FormatError, MeasurementFailed, OSError) as exc:
        print(f"usbf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
