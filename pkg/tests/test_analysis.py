import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtjsnn import analysis, ann, snn
from mtjsnn.device import SwitchCurve


def sig(x):
    return 1 / (1 + np.exp(-x))


def test_chord_examples():
    I = np.linspace(0, 1, 11)
    assert np.all(analysis.chord_value(0.0, I) == 0.5)
    assert analysis.chord_value(-2.5, 0.0) == 0.5
    for w in (-3, -0.4, 1.0, 2.7):
        assert analysis.chord_value(w, 1.0) == pytest.approx(sig(w), abs=1e-15)


def test_error_grid_examples():
    mx, w, I, err = analysis.approx_error_grid((1.0, 1.0), (0, 1), (1, 2001))
    assert mx < 0.02
    mx, w, I, err = analysis.approx_error_grid((3.0, 3.0), (0, 1), (1, 2001))
    assert mx == pytest.approx(0.091, abs=0.002)
    assert I[np.argmax(err[0])] == pytest.approx(0.49, abs=0.02)
    mx, w, I, err = analysis.approx_error_grid(resolution=61)
    assert np.all(err[:, 0] < 1e-15) and np.all(err[:, -1] < 1e-15)
    assert w[0] == -3 and w[-1] == 3 and err.shape == (61, 61)


def test_error_field_symmetric():
    _, w, I, err = analysis.approx_error_grid(resolution=41)
    assert np.allclose(err, err[::-1], atol=1e-15)


@given(st.floats(-3, 3), st.floats(0, 1))
def test_error_matches_direct_formula(w, I):
    _, _, _, err = analysis.approx_error_grid((w, w), (I, I), (1, 1))
    want = abs(sig(w * I) - (I * sig(w) + (1 - I) / 2))
    assert err[0, 0] == pytest.approx(want, abs=1e-12)


def test_error_grid_csv(tmp_path):
    _, w, I, err = analysis.approx_error_grid(resolution=(3, 4))
    analysis.write_error_grid(tmp_path / "e.csv", w, I, err)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "w,i,error" and len(lines) == 13


def test_neuron_write_energy_example():
    assert analysis.neuron_write_energy(71e-6, 400.0, 0.5e-9) == pytest.approx(1.008e-15, rel=1e-3)


class FakeTrace:
    """A run trace with fixed per-step statistics."""

    def __init__(self, T, n_img=2, spikes=100, n_neurons=4234):
        self.counts = np.zeros((n_img, T, 10), dtype=np.int32)
        self.sum_I2 = np.full((n_img, T), 3e-6)
        self.sum_a2G = np.full((n_img, T), 2e-3)
        self.n_spikes = np.full((n_img, T), spikes)
        self.n_neurons = n_neurons

    @property
    def T_N(self):
        return self.counts.shape[1]


def test_energy_terms_by_hand():
    r = FakeTrace(5)
    e = analysis.energy_per_image(r, V_o=0.9, R_HM=400.0, T_w=1e-9, I_reset=100e-6)
    assert e.e_neuron_write == pytest.approx(5 * 3e-6 * 400 * 1e-9)
    assert e.e_crossbar_write == pytest.approx(0.81 * 5 * 2e-3 * 1e-9)
    quiet = 5 * (4234 - 100)
    assert e.e_read == pytest.approx(1e-9 * (500 / 30e3 + quiet / 40e3))
    assert e.e_reset == pytest.approx(500 * 1e-8 * 400 * 1e-9)
    assert e.total_per_image == pytest.approx(e.e_neuron_write + e.e_crossbar_write + e.e_read + e.e_reset)
    assert e.timesteps == 5 and e.cmos_baseline == 391e-9


def test_energy_zero_steps_and_linearity():
    r = FakeTrace(20)
    z = analysis.energy_per_image(r, 1.0, 400.0, 1e-9, 1e-4, steps=0)
    assert z.total_per_image == 0 and z.timesteps == 0
    a = analysis.energy_per_image(r, 1.0, 400.0, 1e-9, 1e-4, steps=10)
    b = analysis.energy_per_image(r, 1.0, 400.0, 1e-9, 1e-4, steps=20)
    assert b.total_per_image == pytest.approx(2 * a.total_per_image, rel=0.05)
    with pytest.raises(ValueError):
        analysis.energy_per_image(None, 1.0, 400.0, 1e-9, 1e-4)


def test_energy_csv(tmp_path):
    e = analysis.energy_per_image(FakeTrace(3), 1.0, 400.0, 1e-9, 1e-4)
    analysis.write_energy(tmp_path / "e.csv", e)
    rows = dict(l.split(",") for l in (tmp_path / "e.csv").read_text().splitlines()[1:])
    assert float(rows["cmos_baseline"]) == 391e-9
    assert float(rows["total_per_image"]) == pytest.approx(e.total_per_image, rel=1e-8)


@pytest.fixture(scope="module")
def small_chip():
    m = ann.init_model(0)
    rng = np.random.default_rng(1)
    for l in m.convs + [m.dense]:
        l.weights[:] = rng.uniform(-1.5, 1.5, l.weights.shape)
    m = ann.clip_and_quantize(m)[0]
    I = np.linspace(-50e-6, 150e-6, 201)
    c = SwitchCurve(1e-9, 300.0, I, sig((I - 30e-6) / 5e-6), np.full(201, 2000))
    c.I_bias, c.I_o, c.I_reset = 30e-6, 5e-6, 100e-6
    images = rng.random((20, 28, 28))
    labels = rng.integers(0, 10, 20)
    return snn.build_instance(m, c), c, images, labels


def test_variation_zero_sigma_identical(small_chip):
    inst, c, x, y = small_chip
    rep = analysis.variation_sweep(inst, c, 0.0, 0.0, 3, x, y, T_N=5)
    assert np.all(rep.accuracies == rep.accuracies[0]) and rep.accuracies[0] == rep.baseline
    assert rep.drop == 0 and rep.seeds == [0, 1, 2] and rep.std_accuracy == 0


def test_variation_reproducible(small_chip, tmp_path):
    inst, c, x, y = small_chip
    a = analysis.variation_sweep(inst, c, 0.3, 0.3, 3, x, y, T_N=5, baseline=False)
    b = analysis.variation_sweep(inst, c, 0.3, 0.3, 3, x, y, T_N=5, baseline=False)
    assert np.array_equal(a.accuracies, b.accuracies) and np.isnan(a.baseline)
    analysis.write_variation(tmp_path / "v.csv", [a, b])
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "sigma_g,sigma_bias,t_w_ns,instance,accuracy" and len(lines) == 7
    with pytest.raises(ValueError):
        analysis.variation_sweep(inst, c, 0.1, 0.0, 0, x, y)


def test_accuracy_curve_and_predictions(small_chip, tmp_path):
    inst, c, x, y = small_chip
    r = snn.run_network(snn.hardware_program(inst, c), x, 6)
    rows = analysis.accuracy_curve(r, y)
    assert [t for t, _ in rows] == list(range(1, 7))
    assert rows[-1][1] == pytest.approx(np.mean(r.predictions() == y))
    analysis.write_accuracy_curve(tmp_path / "a.csv", rows)
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "timestep,accuracy"
    analysis.write_predictions(tmp_path / "p.csv", r, y)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["image_index", "label", "prediction", "spike_counts_0"]
    assert len(lines) == 21
    first = [int(v) for v in lines[1].split(",")]
    assert first[2] == snn.classify(first[3:])
