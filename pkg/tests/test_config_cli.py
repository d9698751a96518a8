import numpy as np
import pytest

from mtjsnn import ann, config, device
from mtjsnn.cli import main
from mtjsnn.device import SwitchCurve


def write_idx(path, magic, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    head = magic.to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in arr.shape)
    path.write_bytes(head + arr.tobytes())


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Tiny two-class IDX set, a synthetic 0.5 ns curve and a config using them."""
    d = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    lab = rng.integers(0, 2, 60)
    img = rng.integers(0, 50, (60, 28, 28))
    img[lab == 0, :, :14] += 200
    img[lab == 1, :, 14:] += 200
    write_idx(d / "img", ann.IMAGE_MAGIC, img)
    write_idx(d / "lab", ann.LABEL_MAGIC, lab)
    I = np.linspace(0, 80e-6, 81)
    c = SwitchCurve(0.5e-9, 300.0, I, 1 / (1 + np.exp(-(I - 30e-6) / 5e-6)), np.full(81, 2000))
    c.I_bias, c.I_o, c.I_reset = 30e-6, 5e-6, 90e-6
    device.save_curve(c, d / "curve.csv")
    (d / "run.cfg").write_text(
        "# tiny end-to-end setup\n"
        f"paths.train_images = {d / 'img'}\npaths.train_labels = {d / 'lab'}\n"
        f"paths.mnist_images = {d / 'img'}\npaths.mnist_labels = {d / 'lab'}\n"
        f"paths.model = {d / 'model.txt'}\npaths.curve = {d / 'curve.csv'}\n"
        "train.epochs = 1\ntrain.batch = 10\nrun.timesteps = 5\nrun.n_images = 20\n"
        "run.n_instances = 2  # chips per point\n")
    return d


def run_cli(*args):
    return main([str(a) for a in args])


def test_parse_and_defaults():
    c = config.parse("xbar.v_o = 0.8  # lower supply\n\nrun.quantize = no\n")
    assert c["xbar.v_o"] == 0.8 and c["run.quantize"] is False and c["char.n_trials"] == 2000
    assert c.device().alpha == 0.0122 and c.device().fl_major_axis == 100e-9
    assert c.floats("run.sigma_g") == [0.0]
    with pytest.raises(config.ConfigError, match="unknown"):
        config.parse("xbar.vo = 1")
    with pytest.raises(config.ConfigError, match="device.alpha"):
        config.parse("device.alpha =")
    with pytest.raises(config.ConfigError, match=":2:"):
        config.parse("\nnot a pair")
    with pytest.raises(config.ConfigError, match="int"):
        config.parse("run.timesteps = many")
    with pytest.raises(config.ConfigError, match="paths.mnist_images"):
        config.Config().require("paths.mnist_images")


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit) as e:
        run_cli("run", "--help")
    assert e.value.code == 0
    out = capsys.readouterr().out
    for k in config.KEYS:
        assert k in out
    assert "ohm" in out and "ns" in out


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        run_cli("bogus")
    assert e.value.code == 1
    (tmp_path / "bad.cfg").write_text("xbar.bogus = 1\n")
    assert run_cli("error-grid", "--config", tmp_path / "bad.cfg", "--out", tmp_path) == 1
    assert run_cli("error-grid", "--config", tmp_path / "missing.cfg") == 1
    assert run_cli("run", "--set", "run.mode=analog") == 1
    assert "unknown config key" in capsys.readouterr().err


def test_error_grid(tmp_path):
    assert run_cli("error-grid", "--out", tmp_path, "--set", "grid.resolution=11") == 0
    lines = (tmp_path / "error_grid.csv").read_text().splitlines()
    assert lines[0] == "w,i,error" and len(lines) == 1 + 121


def test_missing_prerequisites(work, tmp_path, capsys):
    base = ["--config", work / "run.cfg", "--out", tmp_path]
    assert run_cli("run", *base, "--set", f"paths.model={tmp_path / 'none.txt'}") == 1
    assert "train" in capsys.readouterr().err
    ann.save_model(ann.init_model(0), tmp_path / "m.txt")
    rc = run_cli("run", *base, "--set", f"paths.model={tmp_path / 'm.txt'}",
                 "--set", "run.mode=hardware", "--set", f"paths.curve={tmp_path / 'none.csv'}")
    assert rc == 1 and "characterize first" in capsys.readouterr().err
    rc = run_cli("run", *base, "--set", f"paths.model={tmp_path / 'm.txt'}",
                 "--set", "run.mode=hardware", "--set", "char.t_w_ns=1")
    assert rc == 1 and "T_w=0.5 ns" in capsys.readouterr().err


def test_train_run_sweep_energy(work, tmp_path):
    out = tmp_path / "o"
    base = ["--config", work / "run.cfg", "--out", out]
    assert run_cli("train", *base, "--seed", 3) == 0
    assert (work / "model.txt").exists()
    assert (out / "train_loss.csv").read_text().startswith("epoch,loss\n1,")
    ann.load_model(work / "model.txt")

    assert run_cli("run", *base) == 0  # ideal mode needs no curve
    acc = (out / "accuracy.csv").read_text().splitlines()
    assert acc[0] == "timestep,accuracy" and len(acc) == 6
    pred = (out / "predictions.csv").read_text().splitlines()
    assert len(pred) == 21 and pred[0].startswith("image_index,label,prediction,spike_counts_0")
    first = (out / "predictions.csv").read_bytes()
    assert run_cli("run", *base) == 0
    assert (out / "predictions.csv").read_bytes() == first

    import numba

    before = numba.get_num_threads()
    assert run_cli("run", *base, "--set", "run.mode=hardware", "--threads", 1) == 0
    assert numba.get_num_threads() == before
    hw = ["--set", "run.mode=hardware"]
    assert run_cli("sweep", *base, *hw, "--set", "run.sigma_g=0,0.1",
                   "--set", "run.sigma_bias=0.05") == 0
    rows = (out / "variation.csv").read_text().splitlines()
    assert rows[0] == "sigma_g,sigma_bias,t_w_ns,instance,accuracy" and len(rows) == 1 + 2 * 2
    assert run_cli("sweep", *base) == 1  # ideal mode has no devices to vary

    assert run_cli("energy", *base, *hw) == 0
    e = dict(l.split(",") for l in (out / "energy.csv").read_text().splitlines()[1:])
    assert float(e["cmos_baseline"]) == 391e-9 and float(e["total_per_image"]) > 0


def test_characterize_twice_identical(tmp_path):
    args = ["characterize", "--out", tmp_path, "--set", "char.n_trials=500",
            "--set", "char.grid_points=9", "--set", "char.relax_ns=0.5", "--set", "char.t_w_ns=1"]
    assert run_cli(*args, "--set", f"paths.curve={tmp_path / 'a.csv'}") == 0
    assert run_cli(*args, "--set", f"paths.curve={tmp_path / 'b.csv'}") == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert b"# i_bias_uA=" in a and b"# i_o_uA=" in a
    c = device.load_curve(tmp_path / "a.csv")
    assert c.T_w == 1e-9 and c.n_trials[0] == 500
