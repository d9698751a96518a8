import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mtjsnn import ann


def write_idx(path, magic, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    head = magic.to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in arr.shape)
    path.write_bytes(head + arr.tobytes())


def tiny_set(tmp_path, n=5, labels=None):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (n, 28, 28))
    imgs[0, 0, 0], imgs[0, 0, 1] = 255, 0
    lab = rng.integers(0, 10, n) if labels is None else labels
    write_idx(tmp_path / "img", ann.IMAGE_MAGIC, imgs)
    write_idx(tmp_path / "lab", ann.LABEL_MAGIC, lab)
    return tmp_path / "img", tmp_path / "lab"


def test_load_mnist_scaling(tmp_path):
    d = ann.load_mnist(*tiny_set(tmp_path))
    assert len(d) == 5 and d.images.shape == (5, 28, 28)
    assert d.images[0, 0, 0] == 1.0 and d.images[0, 0, 1] == 0.0
    assert d.images.min() >= 0 and d.images.max() <= 1


def test_load_mnist_errors(tmp_path):
    img, lab = tiny_set(tmp_path)
    write_idx(tmp_path / "lab4", ann.LABEL_MAGIC, [1, 2, 3, 4])
    with pytest.raises(ann.MNISTFormatError, match="labels"):
        ann.load_mnist(img, tmp_path / "lab4")
    write_idx(tmp_path / "wrong", ann.LABEL_MAGIC, np.zeros((5, 28, 28)))
    with pytest.raises(ann.MNISTFormatError, match="magic"):
        ann.load_mnist(tmp_path / "wrong", lab)
    raw = img.read_bytes()
    (tmp_path / "trunc").write_bytes(raw[:-10])
    with pytest.raises(ann.MNISTFormatError, match="truncated"):
        ann.load_mnist(tmp_path / "trunc", lab)
    write_idx(tmp_path / "bad", ann.LABEL_MAGIC, [1, 2, 3, 4, 12])
    with pytest.raises(ann.MNISTFormatError, match="outside"):
        ann.load_mnist(img, tmp_path / "bad")


def test_zero_model_outputs_half():
    m = ann.zero_model()
    x = np.random.default_rng(0).random((3, 28, 28))
    y, s = ann.forward(m, x, keep=True)
    assert np.all(y == 0.5) and np.all(s["a1"] == 0.5) and np.all(s["a2"] == 0.5)


def test_shape_chain():
    m = ann.init_model(0)
    x = np.random.default_rng(0).random((2, 28, 28))
    y, s = ann.forward(m, x, keep=True)
    assert s["a1"].shape == (2, 6, 24, 24) and s["p1"].shape == (2, 6, 12, 12)
    assert s["a2"].shape == (2, 12, 8, 8) and s["flat"].shape == (2, 192) and y.shape == (2, 10)
    assert np.all((y > 0) & (y < 1))
    assert ann.forward(m, x[0]).shape == (10,)


def test_one_hot_kernel_selects_neighbourhood_sum():
    x = np.random.default_rng(1).random((1, 1, 28, 28))
    w = np.zeros((1, 1, 5, 5))
    w[0, 0, 2, 3] = 1.0
    z, _ = ann.conv_forward(x, w, np.zeros(1))
    assert np.allclose(z[0, 0], x[0, 0, 2:26, 3:27])
    w = np.ones((1, 1, 5, 5))
    z, _ = ann.conv_forward(x, w, np.zeros(1))
    assert z[0, 0, 4, 7] == pytest.approx(x[0, 0, 4:9, 7:12].sum())


def test_bad_shapes_rejected():
    m = ann.init_model(0)
    with pytest.raises(ann.ModelFormatError):
        ann.NetworkModel([m.layers[0], m.layers[1], ann.Conv(np.zeros((12, 5, 5, 5)), np.zeros(12)),
                          m.layers[3], m.layers[4]])


def test_gradient_check():
    rng = np.random.default_rng(2)
    m = ann.init_model(3)
    for l in m.convs + [m.dense]:
        l.weights *= 4  # leave the near-linear regime
        l.bias[:] = rng.normal(0, 0.5, l.bias.shape)
    x = rng.random((3, 28, 28))
    t = ann.one_hot([1, 7, 3])
    _, grads = ann.backward(m, x, t)
    h = 1e-4
    worst = 0.0
    for p, g in zip(m.parameters(), grads):
        flat = p.reshape(-1)
        idx = rng.choice(flat.size, size=min(flat.size, 20), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            lp = ann.loss(ann.forward(m, x), t)
            flat[i] = old - h
            lm = ann.loss(ann.forward(m, x), t)
            flat[i] = old
            num = (lp - lm) / (2 * h)
            g_i = g.reshape(-1)[i]
            worst = max(worst, abs(num - g_i) / max(abs(num), abs(g_i), 1e-8))
    assert worst < 1e-4


def synthetic_data(n=1000, seed=0):
    """Two separable 'digits': bright left half vs bright right half."""
    rng = np.random.default_rng(seed)
    lab = rng.integers(0, 2, n)
    img = rng.random((n, 28, 28)) * 0.2
    img[lab == 0, :, :14] += 0.8
    img[lab == 1, :, 14:] += 0.8
    return ann.Dataset(np.clip(img, 0, 1), lab)


def test_training_reduces_loss_and_is_deterministic():
    d = synthetic_data()
    m0 = ann.init_model(0)
    init_loss = ann.loss(ann.forward(m0, d.images), ann.one_hot(d.labels))
    a, trace = ann.train(ann.init_model(0), d, epochs=1, seed=5)
    b, _ = ann.train(ann.init_model(0), d, epochs=1, seed=5)
    assert trace[0] < init_loss
    assert ann.loss(ann.forward(a, d.images), ann.one_hot(d.labels)) < init_loss
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_training_divergence_reported():
    d = synthetic_data(100)
    m = ann.init_model(0)
    m.dense.weights[0, 0] = np.nan
    with pytest.raises(ann.TrainingDiverged, match="learning rate"):
        ann.train(m, d, epochs=1)


def test_codebook():
    cb = ann.codebook()
    assert len(cb) == 16 and cb[0] == pytest.approx(0.3) and cb[-1] == 3.0
    assert cb[1] == pytest.approx(0.48)


def test_quantize_examples():
    q = ann.quantize_weights(np.array([0.0, 3.7, -3.7, 1.0, 0.14, 0.16, -0.2]))
    assert q[0] == 0 and q[1] == 3.0 and q[2] == -3.0
    assert abs(q[3] - 1.0) <= 0.09 and q[3] in ann.codebook()
    assert q[4] == 0 and q[5] == pytest.approx(0.3) and q[6] == pytest.approx(-0.3)


@settings(max_examples=50)
@given(arrays(np.float64, 30, elements=st.floats(-6, 6)))
def test_quantize_idempotent_and_bounded(w):
    q = ann.quantize_weights(w)
    assert np.array_equal(ann.quantize_weights(q), q)
    assert np.all(np.abs(q) <= 3)
    inrange = (np.abs(w) >= 0.3) & (np.abs(w) <= 3)
    assert np.all(np.abs(q - w)[inrange] <= 0.09 + 1e-12)


def test_clip_and_quantize_model():
    m = ann.init_model(0)
    m.dense.weights[0, 0] = 5.0
    m.dense.bias[0] = -4.2
    m.dense.bias[1] = 1.234
    q, cb = ann.clip_and_quantize(m)
    assert q.dense.weights[0, 0] == 3.0 and q.dense.bias[0] == -3.0 and q.dense.bias[1] == 1.234
    assert m.dense.weights[0, 0] == 5.0  # original untouched
    q2, _ = ann.clip_and_quantize(q)
    for a, b in zip(q.parameters(), q2.parameters()):
        assert np.array_equal(a, b)
    for l in q.convs + [q.dense]:
        mags = np.unique(np.abs(l.weights))
        assert np.all(np.isin(mags[mags > 0], cb))


def test_model_round_trip(tmp_path):
    m = ann.init_model(4)
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    ann.save_model(m, p1)
    r = ann.load_model(p1)
    for a, b in zip(m.parameters(), r.parameters()):
        assert np.allclose(a, b, rtol=1e-8, atol=0)
    ann.save_model(r, p2)
    assert p1.read_text() == p2.read_text()
    assert p1.read_text().splitlines()[0] == "MTJSNN-WEIGHTS v1"
    q, _ = ann.clip_and_quantize(m)
    ann.save_model(q, p1)
    for a, b in zip(q.parameters(), ann.load_model(p1).parameters()):
        assert np.array_equal(a, b)


def test_model_file_errors(tmp_path):
    path = tmp_path / "m.txt"
    ann.save_model(ann.init_model(0), path)
    text = path.read_text()
    (tmp_path / "v.txt").write_text(text.replace("v1", "v2", 1))
    with pytest.raises(ann.ModelFormatError, match="header"):
        ann.load_model(tmp_path / "v.txt")
    (tmp_path / "s.txt").write_text(text.replace("conv 12 6 5 5", "conv 12 7 5 5"))
    with pytest.raises(ann.ModelFormatError):
        ann.load_model(tmp_path / "s.txt")
    lines = text.splitlines()
    lines[2] = "nan " + " ".join(lines[2].split()[1:])
    (tmp_path / "n.txt").write_text("\n".join(lines))
    with pytest.raises(ann.ModelFormatError, match="non-finite"):
        ann.load_model(tmp_path / "n.txt")
