import numpy as np
import pytest

from usbf.cli import main
from usbf.config import ExperimentConfig, load_config, parse_config, preset
from usbf.errors import ConfigurationError
from usbf.io import read_records, read_tensor


# configuration ---------------------------------------------------------------------

def test_defaults_are_desk_scale():
    cfg = ExperimentConfig()
    small, large = cfg.arrays()
    assert (small.n_elements, large.n_elements) == (17, 33)
    assert cfg.dataset.n_pairs == 8000 and cfg.dataset.patch_length == 32
    assert cfg.training.epochs == 50 and cfg.training.batch_size == 64
    assert cfg.training.lr == 1e-3 and cfg.training.decay == 1e-8


def test_full_preset():
    cfg = preset("full")
    assert cfg.array.n_small == 33 and cfg.acquisition.n_scan_lines == 65
    assert cfg.dataset.n_pairs == 30000
    with pytest.raises(ConfigurationError):
        preset("huge")


def test_text_round_trip():
    cfg = load_config(overrides=["experiment.technique=pa", "network.dense_widths=64, 32"])
    back = parse_config(cfg.to_text())
    assert back == cfg
    assert back.network.dense_widths == (64, 32)


@pytest.mark.parametrize("text", [
    "[nonsense]\nx = 1\n",
    "[array]\nn_elements = 3\n",
    "[array]\nn_small = many\n",
    "[experiment]\ntechnique = ct\n",
    "[dataset]\nmix = 1.5\n",
    "no section header\n",
])
def test_bad_config_text(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_file_then_overrides(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[array]\nn_small = 9\n[pulse]\nf0_mhz = 3.0  # lower\n")
    cfg = load_config(path, ["array.n_small=5"])
    assert cfg.array.n_small == 5 and cfg.pulse.f0_mhz == 3.0
    with pytest.raises(ConfigurationError):
        load_config(path, ["array.n_small"])
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.ini")


# command line ------------------------------------------------------------------------

FAST = ["--set", "acquisition.n_scan_lines=9", "--set", "acquisition.depth_max_mm=55"]
TINY_NET = ["--set", "network.dense_widths=32", "--set", "network.conv_channels=2, 2",
            "--set", "dataset.n_pairs=6", "--set", "training.epochs=1"]


def run(*args):
    return main([str(a) for a in args])


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        run("simulate")
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        run("bogus", "--out", "x")
    assert info.value.code == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path, "--set", "array.n_small=zero") == 1
    assert "error" in capsys.readouterr().err
    assert run("evaluate", "--out", tmp_path, "--image", tmp_path / "none.usbf") == 1


def test_simulate_is_reproducible_and_snapshots_config(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("simulate", "--out", out, "--phantom", "cyst",
                   "--set", "experiment.cyst_scatterers=50",
                   "--set", "acquisition.n_scan_lines=9") == 0
    assert (a / "channels.usbf").read_bytes() == (b / "channels.usbf").read_bytes()
    snap = load_config(a / "config.ini")
    assert snap.experiment.cyst_scatterers == 50 and snap.acquisition.n_scan_lines == 9


def test_scatterer_file_and_large_array(tmp_path):
    pts = tmp_path / "pts.txt"
    pts.write_text("# x_mm z_mm amplitude\n0 40 1\n2 45\n")
    assert run("simulate", "--out", tmp_path, "--phantom", pts, "--array", "large", *FAST) == 0
    assert read_tensor(tmp_path / "channels.usbf").shape[0] == 33
    pts.write_text("1 2 3 4\n")
    assert run("simulate", "--out", tmp_path, "--phantom", pts, *FAST) == 1


@pytest.mark.parametrize("technique", ["sa", "sta", "pa"])
def test_simulate_reconstruct_evaluate(tmp_path, technique):
    tech = ["--set", f"experiment.technique={technique}", *FAST]
    assert run("simulate", "--out", tmp_path / "sim", *tech) == 0
    assert run("reconstruct", "--out", tmp_path / "rec", "--data",
               tmp_path / "sim" / "channels.usbf", *tech) == 0
    values, angles, depths = read_records(tmp_path / "rec" / "envelope.usbf")
    assert values.shape == (9, len(depths)) and len(angles) == 9
    assert (tmp_path / "rec" / "sector.pgm").exists() and (tmp_path / "rec" / "raster.pgm").exists()
    # the point target sits on the centre line at 50 mm
    line, row = np.unravel_index(np.argmax(values), values.shape)
    assert line == 4 and abs(depths[row] - 50e-3) < 0.5e-3


def test_dataset_train_reconstruct(tmp_path):
    args = [*FAST, *TINY_NET]
    assert run("build-dataset", "--out", tmp_path / "ds", *args) == 0
    assert run("train", "--out", tmp_path / "net", "--dataset", tmp_path / "ds" / "dataset.usbf",
               *args) == 0
    hist = (tmp_path / "net" / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,train_loss,val_loss,lr" and len(hist) == 2
    assert run("simulate", "--out", tmp_path / "sim", *args) == 0
    assert run("reconstruct", "--out", tmp_path / "rec", "--data",
               tmp_path / "sim" / "channels.usbf", "--weights",
               tmp_path / "net" / "weights.usbf", *args) == 0
    # a dataset built for another technique is refused
    assert run("train", "--out", tmp_path / "net2", "--dataset",
               tmp_path / "ds" / "dataset.usbf", "--set", "experiment.technique=pa", *args) == 1


def test_evaluate_point_writes_metrics(tmp_path):
    lines = ["--set", "acquisition.n_scan_lines=41", "--set", "acquisition.depth_max_mm=55"]
    assert run("simulate", "--out", tmp_path / "sim", "--array", "large", *lines) == 0
    assert run("reconstruct", "--out", tmp_path / "rec", "--data",
               tmp_path / "sim" / "channels.usbf", *lines) == 0
    assert run("evaluate", "--out", tmp_path / "ev", "--image",
               tmp_path / "rec" / "envelope.usbf", *lines) == 0
    rows = dict(line.split(",") for line in
                (tmp_path / "ev" / "metrics.csv").read_text().splitlines()[1:])
    assert 1.0 < float(rows["fwhm_mm"]) < 3.0
    assert float(rows["rms_sll_db"]) < -10.0
