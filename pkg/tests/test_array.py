import math

import numpy as np
import pytest

from usbf.array import (AcquisitionConfig, Rect, array_pair, make_cyst_phantom,
                        make_linear_array, make_point_phantom, make_pulse)
from usbf.errors import InvalidArgument


def test_single_element_sits_at_origin():
    a = make_linear_array(1, 0.3e-3, 0.1e-3)
    assert a.element_x.tolist() == [0.0]


def test_two_elements_are_symmetric():
    a = make_linear_array(2, 0.3e-3, 0.1e-3)
    assert a.element_x == pytest.approx([-0.2e-3, 0.2e-3], abs=1e-15)


def test_table_geometry_33_elements():
    a = make_linear_array(33, 0.220e-3, 0.044e-3)
    assert a.pitch == pytest.approx(0.264e-3, abs=1e-15)
    assert a.aperture == pytest.approx(8.448e-3, abs=1e-12)
    assert a.element_x[0] == pytest.approx(-4.224e-3, abs=1e-12)


def test_array_is_centered_and_uniform():
    a = make_linear_array(65, 0.220e-3, 0.044e-3)
    assert abs(a.element_x.sum()) < 1e-12
    assert np.max(np.abs(np.diff(a.element_x) - a.pitch)) < 1e-12


@pytest.mark.parametrize("n", [0, -3])
def test_nonpositive_count_rejected(n):
    with pytest.raises(InvalidArgument):
        make_linear_array(n, 0.2e-3, 0.0)


def test_negative_kerf_rejected():
    with pytest.raises(InvalidArgument):
        make_linear_array(4, 0.2e-3, -1e-6)


@pytest.mark.parametrize("n_small", [17, 33])
def test_small_positions_are_exact_subset_of_large(n_small):
    small, large = array_pair(n_small, 0.220e-3, 0.044e-3)
    assert large.n_elements == 2 * n_small - 1
    offset = (large.n_elements - n_small) // 2
    assert np.array_equal(small.element_x, large.element_x[offset:offset + n_small])


def test_pulse_length_and_duration():
    p = make_pulse(3.5e6, 1.75, 16e6)
    assert p.duration == pytest.approx(0.5e-6)
    assert p.samples.size == 8


def test_pulse_starts_at_zero_and_is_bounded():
    for window in ("hann", "rectangular"):
        p = make_pulse(2.1e6, 2.3, 40e6, window)
        assert p(0.0) == 0.0
        assert np.max(np.abs(p(np.linspace(0, p.duration, 2001)))) <= 1.0


def test_rectangular_pulse_quarter_period_is_one():
    f0 = 3.5e6
    p = make_pulse(f0, 1.0, 16e6, "rectangular")
    assert p(1 / (4 * f0)) == pytest.approx(1.0, abs=1e-15)


def test_pulse_zero_outside_support():
    p = make_pulse(3.5e6, 1.75, 16e6)
    assert p(-1e-9) == 0.0
    assert p(p.duration + 1e-9) == 0.0


def test_pulse_energy_converges_under_fs_refinement():
    energies = []
    for fs in (200e6, 400e6, 800e6):
        p = make_pulse(3.5e6, 1.75, fs)
        energies.append(np.sum(p.samples ** 2) / fs)
    assert abs(energies[0] - energies[-1]) / energies[-1] < 0.01


def test_pulse_rejects_bad_parameters():
    with pytest.raises(InvalidArgument):
        make_pulse(0.0, 1.75, 16e6)
    with pytest.raises(InvalidArgument):
        make_pulse(3.5e6, 1.75, 16e6, "gauss")


def test_acquisition_defaults():
    cfg = AcquisitionConfig()
    assert cfg.line_angles[0] == pytest.approx(-math.radians(24))
    assert cfg.line_angles[-1] == pytest.approx(math.radians(24))
    assert cfg.depth_step == pytest.approx(1540 / 32e6)
    d = cfg.depth_axis()
    assert d[0] == pytest.approx(10e-3) and d[-1] <= 70e-3 + 1e-12


def test_acquisition_rejects_inverted_depths():
    with pytest.raises(InvalidArgument):
        AcquisitionConfig(depth_min=50e-3, depth_max=40e-3)


def test_point_phantom_wrapping():
    assert len(make_point_phantom([])) == 0
    ph = make_point_phantom([(0.0, 50e-3, 1.0)])
    assert len(ph) == 1 and ph.z[0] == 50e-3


def test_point_phantom_rejects_negative_depth():
    with pytest.raises(InvalidArgument):
        make_point_phantom([(0.0, -1e-3, 1.0)])


def test_cyst_phantom_is_deterministic():
    region = Rect(-10e-3, 10e-3, 30e-3, 50e-3)
    a = make_cyst_phantom(region, (0, 40e-3), 4e-3, 500, seed=7)
    b = make_cyst_phantom(region, (0, 40e-3), 4e-3, 500, seed=7)
    assert np.array_equal(a.scatterers, b.scatterers)


def test_cyst_interior_is_empty():
    ph = make_cyst_phantom(Rect(-10e-3, 10e-3, 30e-3, 50e-3), (1e-3, 41e-3), 4e-3, 2000, 3)
    assert np.all(np.hypot(ph.x - 1e-3, ph.z - 41e-3) > 4e-3)


def test_cyst_removed_fraction_matches_area():
    region = Rect(-10e-3, 10e-3, 30e-3, 50e-3)
    r = 5e-3
    n = 10_000
    ph = make_cyst_phantom(region, (0, 40e-3), r, n, seed=11)
    p = math.pi * r * r / region.area
    removed = n - len(ph)
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(removed - n * p) < 3 * sigma


def test_all_scatterers_rejected_gives_empty_phantom():
    # the single draw of seed 0 lands inside the disc
    ph = make_cyst_phantom(Rect(-1e-3, 1e-3, 39e-3, 41e-3), (0, 40e-3), 1e-3, 1, seed=0)
    assert len(ph) == 0
    assert ph.scatterers.shape == (0, 3)


def test_cyst_outside_region_rejected():
    with pytest.raises(InvalidArgument):
        make_cyst_phantom(Rect(-5e-3, 5e-3, 30e-3, 40e-3), (4e-3, 35e-3), 3e-3, 10, 0)
