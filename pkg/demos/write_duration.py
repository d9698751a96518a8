"""
Write duration, crossbar loading and accuracy
=============================================

Short write pulses widen the switching curve, so I_o and with it G_o = I_o/V_o
grow, and the crossbar loads the neuron harder (gamma = sum G / G_s). This
script runs the hardware network at 0.2, 0.5 and 1 ns write pulses for

* the default differential mapping (G+ - G- = w G_o exactly),
* the literal mapping (the OFF partner of every programmed device leaks),
* the differential mapping with the heavy-metal resistance scaled so that
  G_o/G_s matches a device with I_o = 10 uA at 0.5 ns.

Usage: python demos/write_duration.py [n_images] [timesteps]
"""

import sys
from pathlib import Path

import numpy as np

from mtjsnn import ann, device, snn

n_img = int(sys.argv[1]) if len(sys.argv) > 1 else 500
T_N = int(sys.argv[2]) if len(sys.argv) > 2 else 500
root = Path(__file__).resolve().parents[1]
cache = root / ".artifacts"
mnist = Path("/root/data/mnist")

data = ann.load_mnist(mnist / "t10k-images-idx3-ubyte", mnist / "t10k-labels-idx1-ubyte").subset(n_img)
model = ann.clip_and_quantize(ann.load_model(cache / "model.txt"))[0]
curves = {tw: device.load_curve(cache / f"curve_{tw:g}ns_300K.csv") for tw in (0.2, 0.5, 1.0)}
scale = 10e-6 / curves[0.5].I_o  # R_HM factor giving the reference G_o/G_s at 0.5 ns

setups = [("differential", "differential", 400.0),
          ("literal", "literal", 400.0),
          (f"differential, R_HM x{scale:.2f}", "differential", 400.0 * scale)]

print(f"accuracy after {T_N} steps on {n_img} images (mean dense-layer gamma)")
for name, scheme, r_hm in setups:
    row = []
    for tw, c in curves.items():
        inst = snn.build_instance(model, c, R_HM=r_hm, scheme=scheme)
        r = snn.run_network(snn.hardware_program(inst, c), data.images, T_N)
        acc = np.mean(r.predictions() == data.labels)
        row.append(f"{tw:g} ns {acc:.2%} ({inst.layers[2].gamma.mean():.2f})")
    print(f"{name:28s} " + "   ".join(row), flush=True)
