"""
MTJ switching curves and what they imply for the crossbar
=========================================================

Loads the characterized curves built by ``python tests/artifacts.py`` and
prints, per write duration, the bias point, the sigmoid scale I_o, the
reset current, the neuron write energy at bias and the resulting
non-ideality factor gamma of each layer for a trained network.
"""

import sys
from pathlib import Path

import numpy as np

from mtjsnn import analysis, ann, device, snn

cache = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / ".artifacts")
model = ann.clip_and_quantize(ann.load_model(cache / "model.txt"))[0]

print(" T_w    I_bias     I_o   I_reset   E_write   gamma conv1/conv2/dense")
for tw in (0.2, 0.5, 1.0):
    c = device.load_curve(cache / f"curve_{tw:g}ns_300K.csv")
    inst = snn.build_instance(model, c)
    g = " / ".join(f"{l.gamma.mean():.3f}" for l in inst.layers)
    e = analysis.neuron_write_energy(c.I_bias, 400.0, c.T_w)
    print(f"{tw:4.1f}  {c.I_bias * 1e6:6.2f} uA {c.I_o * 1e6:5.2f} uA {c.I_reset * 1e6:6.1f} uA "
          f"{e * 1e15:6.3f} fJ   {g}")

# how closely the raw curve follows its fitted sigmoid
c = device.load_curve(cache / "curve_0.5ns_300K.csv")
x = (c.I_q - c.I_bias) / c.I_o
print("\n0.5 ns curve, (I - I_bias)/I_o against measured and fitted probability")
for k in np.linspace(0, len(x) - 1, 11).astype(int):
    print(f"{x[k]:7.2f}  {c.p[k]:.3f}  {float(c.sigmoid(c.I_q[k])):.3f}")
