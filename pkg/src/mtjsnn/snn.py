"""Time-stepped probabilistic spiking network.

Each time-step: pixels are Bernoulli-encoded, every neuron column sees its
instantaneous weighted input and fires with a probability given by its
transfer function, pooling layers average 2x2 spike windows, and the output
layer's spikes are accumulated per class. Neurons are memoryless.

Two transfer functions are supported:

* ideal: p = sigmoid(sum w a + b), the algorithmic ANN-to-SNN conversion;
* hardware: the crossbar current I_j drives an MTJ whose switching
  probability comes from a characterized :class:`~mtjsnn.device.SwitchCurve`
  (raw interpolant, or its fitted sigmoid).

The uniform draw for neuron n of layer l at step t of image i is
``uniform(fold(fold(fold(key(seed), i), t), l), n)``; layer 0 is the pixel
encoder. Images may therefore be evaluated in any order or in parallel.
"""

from dataclasses import dataclass

import numba as nb
import numpy as np

from . import rng as _rng
from .crossbar import CrossbarParams, layer_weights, map_weights

MODES = ("ideal", "hardware")
CURVE_MODES = ("raw", "sigmoid")
LAYER_SHAPES = ((6, 24), (12, 8), (10, 1))  # (maps, size) of each neuron layer


@dataclass(frozen=True)
class RunConfig:
    T_N: int = 50
    mode: str = "ideal"
    T_w: float = 1e-9
    V_o: float = 1.0
    sigma_G: float = 0.0
    sigma_bias: float = 0.0
    T_K_run: float = 300.0
    master_seed: int = 0
    n_images: int = 1000
    curve_mode: str = "raw"

    def __post_init__(self):
        if self.T_N < 1:
            raise ValueError("T_N must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.curve_mode not in CURVE_MODES:
            raise ValueError(f"curve_mode must be one of {CURVE_MODES}")


@dataclass(frozen=True)
class Program:
    """Kernel-ready description of one network realization.

    For each of the three neuron layers: ``taps`` (input indices), ``W``
    (numerator contribution per unit activation), ``offset`` (constant
    numerator term), ``div`` (denominator) and ``row_G`` (summed row
    conductance, zero in ideal mode). The transfer is either a logistic of
    ``(x - ref) / scale`` or a uniform lookup table.
    """

    taps: tuple
    W: tuple
    offset: tuple
    div: tuple
    row_G: tuple
    use_table: bool
    ref: float = 0.0
    scale: float = 1.0
    table_lo: float = 0.0
    table_step: float = 1.0
    table: np.ndarray = np.zeros(2)


@dataclass
class RunResult:
    counts: np.ndarray  # (n_images, T_N, 10) cumulative output spikes
    sum_I2: np.ndarray  # (n_images, T_N) sum of squared column currents, A^2
    sum_a2G: np.ndarray  # (n_images, T_N) sum over rows of a^2 * row conductance, S
    n_spikes: np.ndarray  # (n_images, T_N) neuron spikes over all layers
    saturated: int  # column evaluations clamped to the table ends
    n_neurons: int
    image_ids: np.ndarray

    @property
    def T_N(self):
        return self.counts.shape[1]

    def predictions(self, step=None):
        """Predicted class per image from cumulative counts after ``step`` steps."""
        c = self.counts[:, (self.T_N if step is None else step) - 1, :]
        return np.argmax(c, axis=1)

    def accuracy_by_step(self, labels):
        pred = np.argmax(self.counts, axis=2)  # (n, T)
        return (pred == np.asarray(labels)[:, None]).mean(axis=0)


def ideal_program(model):
    taps, W, off, div, rowg = [], [], [], [], []
    for _, t, w, b, n_in in layer_weights(model):
        taps.append(t)
        W.append(np.ascontiguousarray(w, dtype=np.float64))
        off.append(b.astype(np.float64))
        div.append(np.ones(len(b)))
        rowg.append(np.zeros(n_in))
    return Program(tuple(taps), tuple(W), tuple(off), tuple(div), tuple(rowg), False)


def build_instance(model, curve, V_o=1.0, R_HM=400.0, scheme="differential"):
    """Map a quantized model onto a crossbar calibrated to ``curve``.

    G_o = I_o / V_o and every column is biased at the curve's P = 0.5 current.
    """
    params = CrossbarParams.calibrated(curve.I_o, V_o=V_o, R_HM=R_HM)
    return map_weights(model, params, curve.I_bias, scheme)


def hardware_program(instance, curve, curve_mode="raw", I_bias=None, I_o=None,
                     table_points=8193):
    """Program for a crossbar instance driving MTJ neurons.

    ``I_bias``/``I_o`` default to the instance calibration; they only matter
    for ``curve_mode="sigmoid"``.
    """
    p = instance.params
    taps, W, off, div, rowg = [], [], [], [], []
    for l in instance.layers:
        taps.append(l.taps)
        W.append((l.G_plus - l.G_minus) * p.V_o)
        off.append(l.I_bias_col.astype(np.float64))
        div.append(1.0 + l.gamma)
        rowg.append(l.row_conductance())
    common = (tuple(taps), tuple(W), tuple(off), tuple(div), tuple(rowg))
    if curve_mode == "sigmoid":
        ref = instance.I_bias if I_bias is None else I_bias
        scale = p.I_o if I_o is None else I_o
        return Program(*common, use_table=False, ref=ref, scale=scale)
    lo, step, values = curve.table(table_points)
    return Program(*common, use_table=True, table_lo=lo, table_step=step,
                   table=np.ascontiguousarray(values))


# ---------------------------------------------------------------- kernel


@nb.njit(cache=True, inline="always")
def _transfer(x, use_table, ref, scale, lo, step, table):
    if not use_table:
        return 1.0 / (1.0 + np.exp(-(x - ref) / scale)), 0
    f = (x - lo) / step
    n = table.shape[0]
    if f <= 0.0:
        return table[0], 1 if f < 0.0 else 0
    if f >= n - 1:
        return table[n - 1], 1 if f > n - 1 else 0
    i = int(f)
    r = f - i
    return table[i] * (1.0 - r) + table[i + 1] * r, 0


@nb.njit(cache=True)
def _fire_layer(a_in, taps, W, off, div, row_G, key, spikes, use_table, ref, scale,
                lo, step, table):
    n_col, fan = taps.shape
    s_i2 = 0.0
    sat = 0
    nsp = 0
    for c in range(n_col):
        acc = 0.0
        for k in range(fan):
            acc += W[c, k] * a_in[taps[c, k]]
        x = (acc + off[c]) / div[c]
        p, s = _transfer(x, use_table, ref, scale, lo, step, table)
        sat += s
        s_i2 += x * x
        if _rng.uniform(key, np.uint64(c)) < p:
            spikes[c] = 1.0
            nsp += 1
        else:
            spikes[c] = 0.0
    s_a2g = 0.0
    for i in range(a_in.shape[0]):
        s_a2g += a_in[i] * a_in[i] * row_G[i]
    return s_i2, s_a2g, sat, nsp


@nb.njit(cache=True, inline="always")
def _pool(src, maps, size, dst):
    h = size // 2
    for m in range(maps):
        for r in range(h):
            for c in range(h):
                b = m * size * size + 2 * r * size + 2 * c
                dst[m * h * h + r * h + c] = 0.25 * (
                    src[b] + src[b + 1] + src[b + size] + src[b + size + 1])


@nb.njit(cache=True, parallel=True)
def _run_kernel(images, image_ids, T_N, master_key,
                t1, W1, o1, d1, g1, t2, W2, o2, d2, g2, t3, W3, o3, d3, g3,
                use_table, ref, scale, lo, step, table):
    n_img = images.shape[0]
    counts = np.zeros((n_img, T_N, 10), dtype=np.int32)
    sum_i2 = np.zeros((n_img, T_N))
    sum_a2g = np.zeros((n_img, T_N))
    n_spk = np.zeros((n_img, T_N), dtype=np.int64)
    sat_img = np.zeros(n_img, dtype=np.int64)
    for i in nb.prange(n_img):
        img_key = _rng.fold(master_key, np.uint64(image_ids[i]))
        x0 = np.empty(784)
        s1 = np.empty(t1.shape[0])
        p1 = np.empty(864)
        s2 = np.empty(t2.shape[0])
        p2 = np.empty(192)
        s3 = np.empty(10)
        run = np.zeros(10, dtype=np.int32)
        for t in range(T_N):
            step_key = _rng.fold(img_key, np.uint64(t))
            k0 = _rng.fold(step_key, np.uint64(0))
            for j in range(784):
                x0[j] = 1.0 if _rng.uniform(k0, np.uint64(j)) < images[i, j] else 0.0
            a, b, c, d = _fire_layer(x0, t1, W1, o1, d1, g1, _rng.fold(step_key, np.uint64(1)),
                                     s1, use_table, ref, scale, lo, step, table)
            _pool(s1, 6, 24, p1)
            a2, b2, c2, d2_ = _fire_layer(p1, t2, W2, o2, d2, g2,
                                          _rng.fold(step_key, np.uint64(2)), s2,
                                          use_table, ref, scale, lo, step, table)
            _pool(s2, 12, 8, p2)
            a3, b3, c3, d3_ = _fire_layer(p2, t3, W3, o3, d3, g3,
                                          _rng.fold(step_key, np.uint64(3)), s3,
                                          use_table, ref, scale, lo, step, table)
            for k in range(10):
                if s3[k] > 0.5:
                    run[k] += 1
                counts[i, t, k] = run[k]
            sum_i2[i, t] = a + a2 + a3
            sum_a2g[i, t] = b + b2 + b3
            sat_img[i] += c + c2 + c3
            n_spk[i, t] = d + d2_ + d3_
    return counts, sum_i2, sum_a2g, n_spk, sat_img.sum()


def run_network(program, images, T_N, master_seed=0, image_ids=None):
    """Simulate ``T_N`` time-steps for each image; see :class:`RunResult`.

    ``image_ids`` name the random streams of the images (defaults to
    0..n-1); passing the dataset indices keeps results identical whatever
    subset or batching is used.
    """
    imgs = np.ascontiguousarray(np.asarray(images, dtype=np.float64).reshape(-1, 784))
    if np.any((imgs < 0) | (imgs > 1)):
        raise ValueError("pixel intensities must lie in [0, 1]")
    ids = np.arange(len(imgs)) if image_ids is None else np.asarray(image_ids)
    ids = ids.astype(np.int64)
    pr = program
    args = []
    for l in range(3):
        args += [np.ascontiguousarray(pr.taps[l], dtype=np.int64),
                 np.ascontiguousarray(pr.W[l], dtype=np.float64),
                 np.ascontiguousarray(pr.offset[l], dtype=np.float64),
                 np.ascontiguousarray(pr.div[l], dtype=np.float64),
                 np.ascontiguousarray(pr.row_G[l], dtype=np.float64)]
    counts, si2, sa2g, nsp, sat = _run_kernel(
        imgs, ids, int(T_N), _rng.stream_key(master_seed), *args,
        pr.use_table, float(pr.ref), float(pr.scale), float(pr.table_lo),
        float(pr.table_step), np.ascontiguousarray(pr.table, dtype=np.float64))
    n_neurons = sum(t.shape[0] for t in pr.taps)
    return RunResult(counts, si2, sa2g, nsp, int(sat), n_neurons, ids)


# ---------------------------------------------------------------- single-unit API


def encode_poisson(pixel, rng):
    """One Bernoulli(pixel) input spike."""
    if not 0.0 <= pixel <= 1.0:
        raise ValueError(f"pixel intensity {pixel} outside [0, 1]")
    return int(rng.random() < pixel)


def fire_ideal(x, rng):
    """Spike with probability sigmoid(x)."""
    return int(rng.random() < 1.0 / (1.0 + np.exp(-x)))


def fire_hardware(current, curve, rng, curve_mode="raw"):
    """Write/read/reset cycle of one MTJ neuron driven by ``current``.

    Returns ``(spike, saturated)``: the MTJ ends in P (spike) with the
    curve's switching probability; the device is then reset to AP
    unconditionally, so nothing else carries over. ``saturated`` flags a
    current outside the characterized grid.
    """
    saturated = not (curve.I_q[0] <= current <= curve.I_q[-1])
    p = float(curve.prob(current) if curve_mode == "raw" else curve.sigmoid(current))
    return int(rng.random() < p), saturated


def pool_average(plane):
    """Mean over non-overlapping 2x2 windows of the last two axes."""
    plane = np.asarray(plane, dtype=float)
    h, w = plane.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"pooling needs even dimensions, got {h}x{w}")
    return plane.reshape(*plane.shape[:-2], h // 2, 2, w // 2, 2).mean(axis=(-3, -1))


def classify(counts):
    """Index of the largest count; ties go to the lowest index."""
    return int(np.argmax(np.asarray(counts)))
