import numpy as np
import pytest

from usbf.array import AcquisitionConfig, make_point_phantom
from usbf.beamform import SectorGrid, das_pa, das_sa, das_sta
from usbf.errors import InvalidArgument
from usbf.nn import PatchShape, init_network
from usbf.pipeline import OracleMapper, dnnb_reconstruct
from usbf.sim import SAChannelData, simulate_pa, simulate_sa, simulate_sta


@pytest.fixture(scope="module")
def eval_cfg():
    return AcquisitionConfig(n_scan_lines=33)


def crop(cfg, z, half=3e-3, lines=slice(10, 23)):
    d = cfg.depth_axis()
    return SectorGrid(cfg.line_angles[lines], d[np.abs(d - z) <= half])


# focused RF lines are compared, so no envelope edge effects enter the crop
def rel_rms(a, b):
    return np.sqrt(np.mean((a - b) ** 2)) / np.abs(b).max()


@pytest.fixture(scope="module")
def phantom():
    return make_point_phantom([(0.0, 45e-3, 1.0), (3e-3, 46e-3, 0.5)])


def test_oracle_sa_equals_large_das(small, large, pulse, eval_cfg, phantom):
    grid = crop(eval_cfg, 45e-3)
    d_s = simulate_sa(phantom, small, pulse, eval_cfg)
    d_l = simulate_sa(phantom, large, pulse, eval_cfg)
    oracle = OracleMapper(d_l, large, eval_cfg, pulse)
    img = dnnb_reconstruct(d_s, oracle, small, large, eval_cfg, grid, pulse, envelope=False)
    ref = das_sa(d_l, large, eval_cfg, grid, pulse, envelope=False)
    assert rel_rms(img.values, ref.values.real) < 1e-4


def test_oracle_sta_equals_large_das(small, large, pulse, eval_cfg, phantom):
    grid = crop(eval_cfg, 45e-3, 1.5e-3, slice(14, 19))
    d_s = simulate_sta(phantom, small, pulse, eval_cfg)
    d_l = simulate_sta(phantom, large, pulse, eval_cfg, tx_indices=np.arange(17) + 8)
    oracle = OracleMapper(d_l, large, eval_cfg, pulse)
    img = dnnb_reconstruct(d_s, oracle, small, large, eval_cfg, grid, pulse, envelope=False)
    ref = das_sta(d_l, large, eval_cfg, grid, pulse, envelope=False)
    assert rel_rms(img.values, ref.values.real) < 1e-4


def test_oracle_pa_equals_large_das(small, large, pulse, eval_cfg, phantom):
    d = eval_cfg.depth_axis()
    depths = d[np.abs(d - 45e-3) <= 3e-3]
    d_s = simulate_pa(phantom, small, pulse, eval_cfg)
    d_l = simulate_pa(phantom, large, pulse, eval_cfg)
    oracle = OracleMapper(d_l, large, eval_cfg, pulse)
    img = dnnb_reconstruct(d_s, oracle, small, large, eval_cfg,
                           SectorGrid(eval_cfg.line_angles, depths), pulse, envelope=False)
    ref = das_pa(d_l, large, eval_cfg, depths, pulse, envelope=False)
    assert np.array_equal(img.line_angles, ref.line_angles)
    assert rel_rms(img.values, ref.values.real) < 1e-4


def test_zero_data_gives_zero_image(small, large, pulse, cfg):
    net = init_network(PatchShape(17, 32), 0, (32,), (2, 2))
    data = SAChannelData(np.zeros((17, 1500)), cfg.fs)
    img = dnnb_reconstruct(data, net, small, large, cfg, crop(cfg, 40e-3), pulse)
    assert not img.values.any()


def test_output_scales_with_data(small, large, pulse, cfg):
    net = init_network(PatchShape(17, 32), 1, (32,), (2, 2))
    data = simulate_sa(make_point_phantom([(0.0, 40e-3, 1.0)]), small, pulse, cfg)
    grid = crop(cfg, 40e-3, 1e-3)
    a = dnnb_reconstruct(data, net, small, large, cfg, grid, pulse)
    b = dnnb_reconstruct(SAChannelData(3.0 * data.samples, data.fs), net, small, large, cfg, grid,
                         pulse)
    assert np.allclose(b.values, 3.0 * a.values, rtol=1e-5, atol=1e-7 * a.values.max())


def test_batch_size_does_not_change_result(small, large, pulse, cfg):
    net = init_network(PatchShape(17, 32), 2, (32,), (2, 2))
    data = simulate_sa(make_point_phantom([(1e-3, 40e-3, 1.0)]), small, pulse, cfg)
    grid = crop(cfg, 40e-3, 1e-3)
    a = dnnb_reconstruct(data, net, small, large, cfg, grid, pulse, batch_size=4096)
    b = dnnb_reconstruct(data, net, small, large, cfg, grid, pulse, batch_size=37)
    assert np.allclose(a.values, b.values, rtol=1e-6, atol=1e-9 * a.values.max())


def test_network_shape_mismatch(small, large, pulse, cfg):
    net = init_network(PatchShape(9, 32), 0, (16,), (2, 2))
    data = SAChannelData(np.zeros((17, 1500)), cfg.fs)
    with pytest.raises(InvalidArgument):
        dnnb_reconstruct(data, net, small, large, cfg, crop(cfg, 40e-3), pulse)


def test_technique_mismatch(small, large, pulse, cfg):
    net = init_network(PatchShape(17, 32), 0, (16,), (2, 2))
    data = SAChannelData(np.zeros((17, 1500)), cfg.fs)
    with pytest.raises(InvalidArgument):
        dnnb_reconstruct(data, net, small, large, cfg, crop(cfg, 40e-3), pulse, technique="pa")


def test_bad_mapper_output(small, large, pulse, cfg):
    data = simulate_sa(make_point_phantom([(0.0, 40e-3, 1.0)]), small, pulse, cfg)
    with pytest.raises(InvalidArgument):
        dnnb_reconstruct(data, lambda p, ctx: np.zeros((len(p), 5)), small, large, cfg,
                         crop(cfg, 40e-3, 1e-3), pulse)
