"""
Sigmoid neuron versus its spiking average
=========================================

A sigmoid neuron fed a Bernoulli(I) input through weight w fires, on
average, on the chord between sigmoid(0) and sigmoid(w). This script prints
how far that chord sits from the analog output sigmoid(w I), then checks
the chord against a simulated spiking neuron.
"""

import numpy as np

from mtjsnn import analysis, snn

# worst-case gap for a few weights
for w in (0.5, 1.0, 2.0, 3.0):
    mx, _, I, err = analysis.approx_error_grid((w, w), (0, 1), (1, 10001))
    print(f"w = {w:3.1f}: max |sigmoid(wI) - chord| = {mx:.4f} at I = {I[np.argmax(err[0])]:.3f}")

# simulated firing rate of one neuron against the chord
rng = np.random.default_rng(0)
T = 20000
print("\n   w     I   simulated   chord")
for w, I in [(3.0, 0.5), (-2.0, 0.3), (1.0, 0.9)]:
    rate = np.mean([snn.fire_ideal(w * snn.encode_poisson(I, rng), rng) for _ in range(T)])
    print(f"{w:4.1f}  {I:4.1f}   {rate:.4f}     {analysis.chord_value(w, I):.4f}")

# the full error field as CSV
_, w, I, err = analysis.approx_error_grid(resolution=61)
analysis.write_error_grid("error_grid.csv", w, I, err)
print("\nwrote error_grid.csv")
