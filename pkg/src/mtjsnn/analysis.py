"""Conversion error, variation sweeps and the energy model."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import snn
from .crossbar import apply_variation

CMOS_BASELINE_J = 391e-9  # reported figure for the 45 nm CMOS baseline, carried as is


def chord_value(w, I):
    """Mean firing rate of a sigmoid neuron fed a Bernoulli(I) input through weight w.

    The neuron sees w with probability I and 0 otherwise, so the rate is the
    chord I*sigmoid(w) + (1 - I)/2.
    """
    w = np.asarray(w, dtype=float)
    return 0.5 + 0.5 * np.asarray(I, dtype=float) * np.tanh(w / 2)


def approx_error_grid(w_range=(-3.0, 3.0), I_range=(0.0, 1.0), resolution=601):
    """|sigmoid(w I) - chord(w, I)| on a regular grid.

    Returns ``(max_error, w, I, error)`` with ``error[i, j]`` at ``(w[i], I[j])``.
    ``resolution`` is a point count, or a pair of counts for (w, I).
    """
    nw, ni = (resolution, resolution) if np.isscalar(resolution) else resolution
    w = np.linspace(*w_range, nw)
    I = np.linspace(*I_range, ni)
    W, II = np.meshgrid(w, I, indexing="ij")
    err = np.abs(0.5 + 0.5 * np.tanh(W * II / 2) - chord_value(W, II))
    return float(err.max()), w, I, err


def write_error_grid(path, w, I, err):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["w", "i", "error"])
        for a, wa in enumerate(w):
            for b, ib in enumerate(I):
                out.writerow([f"{wa:.9g}", f"{ib:.9g}", f"{err[a, b]:.9g}"])


# ---------------------------------------------------------------- accuracy


def accuracy_curve(result, labels):
    """(timestep, accuracy) pairs from cumulative counts, timesteps from 1."""
    acc = result.accuracy_by_step(labels)
    return [(t + 1, float(a)) for t, a in enumerate(acc)]


def write_accuracy_curve(path, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["timestep", "accuracy"])
        for t, a in rows:
            out.writerow([t, f"{a:.6f}"])


def write_predictions(path, result, labels, image_indices=None):
    idx = result.image_ids if image_indices is None else image_indices
    final = result.counts[:, -1, :]
    pred = result.predictions()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["image_index", "label", "prediction"] + [f"spike_counts_{k}" for k in range(10)])
        for i in range(len(final)):
            out.writerow([int(idx[i]), int(labels[i]), int(pred[i])] + [int(c) for c in final[i]])


# ---------------------------------------------------------------- variation


@dataclass
class VariationReport:
    sigma_G: float
    sigma_bias: float
    T_w: float
    n_instances: int
    accuracies: np.ndarray
    baseline: float = float("nan")
    seeds: list = field(default_factory=list)

    @property
    def mean_accuracy(self):
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self):
        return float(np.std(self.accuracies, ddof=1)) if self.n_instances >= 2 else float("nan")

    @property
    def drop(self):
        """Baseline minus mean accuracy, in accuracy fraction."""
        return self.baseline - self.mean_accuracy


def run_accuracy(program, images, labels, T_N, master_seed=0, image_ids=None):
    r = snn.run_network(program, images, T_N, master_seed, image_ids)
    return float(np.mean(r.predictions() == np.asarray(labels)))


def variation_sweep(instance, curve, sigma_G, sigma_bias, n_instances, images, labels,
                    T_N=50, master_seed=0, first_seed=0, curve_mode="raw", image_ids=None,
                    baseline=True, log=None):
    """Accuracy over ``n_instances`` independently perturbed chips.

    Chip k uses variation seed ``first_seed + k``; all chips share the spike
    streams of ``master_seed`` so differences come from the devices alone.
    With ``baseline`` the unperturbed chip is also run.
    """
    if n_instances < 1:
        raise ValueError("need at least one instance")
    acc = np.empty(n_instances)
    seeds = [first_seed + k for k in range(n_instances)]
    for k, s in enumerate(seeds):
        chip = apply_variation(instance, sigma_G, sigma_bias, s)
        prog = snn.hardware_program(chip, curve, curve_mode)
        acc[k] = run_accuracy(prog, images, labels, T_N, master_seed, image_ids)
        if log:
            log(k, acc[k])
    base = float("nan")
    if baseline:
        base = run_accuracy(snn.hardware_program(instance, curve, curve_mode),
                            images, labels, T_N, master_seed, image_ids)
    return VariationReport(sigma_G, sigma_bias, curve.T_w, n_instances, acc, base, seeds)


def write_variation(path, reports):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["sigma_g", "sigma_bias", "t_w_ns", "instance", "accuracy"])
        for r in reports:
            for k, a in enumerate(r.accuracies):
                out.writerow([f"{r.sigma_G:g}", f"{r.sigma_bias:g}", f"{r.T_w * 1e9:g}", k, f"{a:.6f}"])


# ---------------------------------------------------------------- energy


@dataclass(frozen=True)
class ReadParams:
    """Behavioral read divider: the neuron MTJ in series with a reference MTJ held in AP."""

    V_read: float = 1.0
    R_P: float = 10e3
    R_AP: float = 20e3
    T_read: float = None  # defaults to T_w
    T_reset: float = None  # defaults to T_w


@dataclass(frozen=True)
class EnergyBreakdown:
    e_crossbar_write: float
    e_neuron_write: float
    e_read: float
    e_reset: float
    timesteps: int
    cmos_baseline: float = CMOS_BASELINE_J

    @property
    def total_per_image(self):
        return self.e_crossbar_write + self.e_neuron_write + self.e_read + self.e_reset

    def rows(self):
        return [("crossbar_write", self.e_crossbar_write), ("neuron_write", self.e_neuron_write),
                ("read", self.e_read), ("reset", self.e_reset),
                ("total_per_image", self.total_per_image), ("cmos_baseline", self.cmos_baseline)]


def neuron_write_energy(current, R_HM, T_w):
    """I^2 R t dissipated in the heavy metal during one write pulse."""
    return current * current * R_HM * T_w


def energy_per_image(result, V_o, R_HM, T_w, I_reset, read=ReadParams(), steps=None):
    """Mean per-image energy of a hardware run over its first ``steps`` steps."""
    if result is None or result.sum_I2 is None:
        raise ValueError("energy needs a run trace")
    T = result.T_N if steps is None else steps
    if T == 0 or len(result.counts) == 0:
        return EnergyBreakdown(0.0, 0.0, 0.0, 0.0, 0)
    t_read = T_w if read.T_read is None else read.T_read
    t_reset = T_w if read.T_reset is None else read.T_reset
    n_img = len(result.counts)
    si2 = result.sum_I2[:, :T].sum() / n_img
    sa2g = result.sum_a2G[:, :T].sum() / n_img
    spikes = result.n_spikes[:, :T].sum() / n_img
    quiet = result.n_neurons * T - spikes
    V2 = read.V_read ** 2
    e_read = V2 * t_read * (spikes / (read.R_P + read.R_AP) + quiet / (2 * read.R_AP))
    return EnergyBreakdown(
        e_crossbar_write=V_o ** 2 * sa2g * T_w,
        e_neuron_write=si2 * R_HM * T_w,
        e_read=e_read,
        e_reset=spikes * I_reset ** 2 * R_HM * t_reset,
        timesteps=T,
    )


def write_energy(path, breakdown):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["component", "joules"])
        for name, v in breakdown.rows():
            out.writerow([name, f"{v:.9g}"])
