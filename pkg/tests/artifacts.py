"""Expensive shared inputs of the acceptance suite, built once and cached on disk.

The cache lives in ``$MTJSNN_CACHE`` (default ``<repo>/.artifacts``) and the
MNIST IDX files are read from ``$MTJSNN_MNIST`` (default ``/root/data/mnist``).
Delete the cache directory to rebuild everything from scratch.

Run ``python tests/artifacts.py`` to build the cache ahead of pytest.
"""

import json
import os
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("MTJSNN_CACHE", ROOT / ".artifacts"))
MNIST = Path(os.environ.get("MTJSNN_MNIST", "/root/data/mnist"))

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
CURVES = ((0.2, 300.0), (0.5, 300.0), (1.0, 300.0), (1.0, 400.0))

RESULTS = []  # one "CRITERION n PASS|FAIL: ..." line per acceptance criterion


def have_mnist():
    return all((MNIST / f).exists() for f in TRAIN_FILES + TEST_FILES)


def _say(msg):
    print(f"[artifacts] {msg}", file=sys.stderr, flush=True)


def test_set():
    from mtjsnn import ann

    return ann.load_mnist(*(MNIST / f for f in TEST_FILES))


def model():
    """Float model trained with the default hyper-parameters (seed 0)."""
    from mtjsnn import ann

    path = CACHE / "model.txt"
    if not path.exists():
        CACHE.mkdir(parents=True, exist_ok=True)
        data = ann.load_mnist(*(MNIST / f for f in TRAIN_FILES))
        t0 = time.time()
        m, losses = ann.train(ann.init_model(0), data,
                              log=lambda e, l: _say(f"epoch {e + 1} loss {l:.5f}"))
        tmp = path.with_suffix(".tmp")
        ann.save_model(m, tmp)
        (CACHE / "train_losses.json").write_text(
            json.dumps({"losses": list(losses), "seconds": time.time() - t0}))
        tmp.replace(path)
    return ann.load_model(path)


def train_losses():
    model()
    return json.loads((CACHE / "train_losses.json").read_text())


def curve(T_w_ns, T_K=300.0):
    """Characterized forward curve (2000 trials/point, seed 0) with its reverse curve."""
    from mtjsnn import device, llg

    path = CACHE / f"curve_{T_w_ns:g}ns_{T_K:g}K.csv"
    rpath = CACHE / f"reverse_{T_w_ns:g}ns_{T_K:g}K.csv"
    if not (path.exists() and rpath.exists()):
        CACHE.mkdir(parents=True, exist_ok=True)
        params = llg.DeviceParams(T_K=T_K)
        fields = llg.FieldModel.calibrated(llg.DeviceParams())
        t0 = time.time()
        fwd, rev = device.characterize(params, fields, T_w_ns * 1e-9, n_trials=2000, seed=0,
                                       log=lambda m: _say(f"{T_w_ns:g} ns {T_K:g} K: {m}"))
        seconds = time.time() - t0
        _say(f"{T_w_ns:g} ns {T_K:g} K done in {seconds:.0f} s")
        path.with_suffix(".json").write_text(json.dumps({"seconds": seconds}))
        device.save_curve(rev, rpath)
        device.save_curve(fwd, path)
    return device.load_curve(path), device.load_curve(rpath)


def curve_seconds(T_w_ns, T_K=300.0):
    """Wall time of the characterization run that built the cached curve, or None."""
    meta = CACHE / f"curve_{T_w_ns:g}ns_{T_K:g}K.json"
    return json.loads(meta.read_text())["seconds"] if meta.exists() else None


if __name__ == "__main__":
    for tw, tk in CURVES:
        curve(tw, tk)
    if have_mnist():
        model()
    _say("cache complete")
