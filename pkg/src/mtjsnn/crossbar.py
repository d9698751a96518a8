"""Resistive crossbar mapping of the quantized network onto MTJ neuron columns.

Every neuron (each conv output pixel and each dense output) owns one
crossbar column fed by a pair of rows per input: the + row is driven at
a*V_o and the - row at -a*V_o for input activation a. The column current
into the heavy metal of the neuron is

    I_j = (sum_i (G+_ij - G-_ij) a_i V_o + I_bias_j) / (1 + gamma_j),
    gamma_j = sum_i (G+_ij + G-_ij) / G_s.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

W_MAX = 3.0
G_RATIO = 10.0


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class CrossbarParams:
    V_o: float
    G_o: float
    G_s: float
    I_o: float

    def __post_init__(self):
        if min(self.V_o, self.G_o, self.G_s, self.I_o) <= 0:
            raise ValueError("crossbar parameters must be positive")
        if abs(self.G_o * self.V_o - self.I_o) > 1e-9 * self.I_o:
            raise ValueError("calibration requires I_o = G_o * V_o")

    @classmethod
    def calibrated(cls, I_o, V_o=1.0, R_HM=400.0):
        return cls(V_o=V_o, G_o=I_o / V_o, G_s=1.0 / R_HM, I_o=I_o)

    @property
    def G_max(self):
        return W_MAX * self.G_o

    @property
    def G_off(self):
        return self.G_max / G_RATIO


@dataclass(frozen=True)
class HardwareLayer:
    """All columns of one neuron layer.

    ``taps[c, k]`` is the flat index of the k-th input of column c in the
    previous layer's activation vector.
    """

    name: str
    taps: np.ndarray  # (n_col, fan_in) int
    G_plus: np.ndarray  # (n_col, fan_in) S
    G_minus: np.ndarray  # (n_col, fan_in) S
    I_bias_col: np.ndarray  # (n_col,) A
    gamma: np.ndarray  # (n_col,)
    n_inputs: int

    @property
    def n_columns(self):
        return self.taps.shape[0]

    def row_conductance(self):
        """Total conductance hanging on each input's row pair, per input."""
        g = (self.G_plus + self.G_minus).ravel()
        return np.bincount(self.taps.ravel(), weights=g, minlength=self.n_inputs)


@dataclass(frozen=True)
class HardwareInstance:
    """One simulated chip: three crossbar layers plus calibration constants."""

    layers: tuple
    params: CrossbarParams
    I_bias: float
    variation_seed: int = -1
    sigma_G: float = 0.0
    sigma_bias: float = 0.0
    scheme: str = "literal"


def conv_taps(in_maps, in_size, out_maps, k=5):
    """Input indices of every output column of a valid convolution.

    Columns are ordered (out_map, row, col) and inputs (in_map, i, j), both
    C-order flattened, matching the kernel layout (out, in, kh, kw).
    """
    out_size = in_size - k + 1
    m, r, c = np.meshgrid(np.arange(in_maps), np.arange(k), np.arange(k), indexing="ij")
    base = (m * in_size * in_size + r * in_size + c).ravel()
    rr, cc = np.meshgrid(np.arange(out_size), np.arange(out_size), indexing="ij")
    offs = (rr * in_size + cc).ravel()
    per_map = offs[:, None] + base[None, :]
    return np.tile(per_map, (out_maps, 1)).astype(np.int64)


def layer_weights(model):
    """Per-column weight rows, biases and taps for conv1, conv2 and dense."""
    c1, _, c2, _, d = model.layers
    out = []
    for name, conv, in_maps, in_size in (("conv1", c1, 1, 28), ("conv2", c2, 6, 12)):
        o = conv.weights.shape[0]
        taps = conv_taps(in_maps, in_size, o)
        per_col = (in_size - 4) ** 2
        w = np.repeat(conv.weights.reshape(o, -1), per_col, axis=0)
        b = np.repeat(conv.bias, per_col)
        out.append((name, taps, w, b, in_maps * in_size * in_size))
    taps = np.tile(np.arange(192), (10, 1))
    out.append(("dense", taps, d.weights.copy(), d.bias.copy(), 192))
    return out


SCHEMES = ("literal", "differential")


def map_weights(model, params, I_bias, scheme="literal"):
    """Program a quantized model into conductance pairs.

    ``literal``: positive w sets G+ = w G_o with G- left OFF, negative w
    mirrors that and w = 0 leaves both devices OFF. The OFF partner then
    leaks, so the pair realizes (|w| - G_off/G_o) rather than |w|.

    ``differential``: the ON device is programmed to w G_o + G_off so that
    G+ - G- = w G_o exactly; OFF devices are unchanged and still load gamma.

    The ANN bias b joins the bias-current row as I_bias + b I_o.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    extra = params.G_off if scheme == "differential" else 0.0
    layers = []
    for name, taps, w, b, n_in in layer_weights(model):
        if np.any(np.abs(w) * params.G_o > params.G_max * (1 + 1e-9)):
            raise MappingError(f"{name}: weight beyond +-{W_MAX}; clip before mapping")
        g_on = np.abs(w) * params.G_o + extra
        gp = np.where(w > 0, g_on, params.G_off)
        gm = np.where(w < 0, g_on, params.G_off)
        ib = I_bias + b * params.I_o
        gamma = (gp + gm).sum(axis=1) / params.G_s
        layers.append(HardwareLayer(name, taps, gp, gm, ib, gamma, n_in))
    return HardwareInstance(tuple(layers), params, I_bias, scheme=scheme)


def column_current(layer, column, activations, params):
    """Current delivered to one neuron for the previous layer's activations."""
    a = np.asarray(activations, dtype=float)[layer.taps[column]]
    num = np.dot(layer.G_plus[column] - layer.G_minus[column], a) * params.V_o
    return (num + layer.I_bias_col[column]) / (1.0 + layer.gamma[column])


def layer_currents(layer, activations, params):
    """Column currents of a whole layer; ``activations`` is (..., n_inputs)."""
    a = np.asarray(activations, dtype=float)[..., layer.taps]  # (..., n_col, fan_in)
    num = np.einsum("...ck,ck->...c", a, layer.G_plus - layer.G_minus) * params.V_o
    return (num + layer.I_bias_col) / (1.0 + layer.gamma)


def apply_variation(instance, sigma_G, sigma_bias, seed):
    """Independent Gaussian device-to-device spread, fixed per chip.

    Each conductance is scaled by (1 + N(0, sigma_G)) and each column bias by
    (1 + N(0, sigma_bias)); gamma is recomputed.
    """
    if sigma_G < 0 or sigma_bias < 0:
        raise ValueError("variation sigmas must be non-negative")
    rng = np.random.default_rng([seed, 0x6D746A])
    G_s = instance.params.G_s
    layers = []
    for l in instance.layers:
        fp = 1.0 + sigma_G * rng.standard_normal(l.G_plus.shape)
        fm = 1.0 + sigma_G * rng.standard_normal(l.G_minus.shape)
        fb = 1.0 + sigma_bias * rng.standard_normal(l.I_bias_col.shape)
        gp = l.G_plus * np.maximum(fp, 1e-9)
        gm = l.G_minus * np.maximum(fm, 1e-9)
        layers.append(replace(l, G_plus=gp, G_minus=gm, I_bias_col=l.I_bias_col * fb,
                              gamma=(gp + gm).sum(axis=1) / G_s))
    return replace(instance, layers=tuple(layers), variation_seed=seed,
                   sigma_G=sigma_G, sigma_bias=sigma_bias)


def write_summary(instance, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "column", "gamma", "i_bias_uA"])
        for l in instance.layers:
            for c in range(l.n_columns):
                w.writerow([l.name, c, f"{l.gamma[c]:.9g}", f"{l.I_bias_col[c] * 1e6:.9g}"])
