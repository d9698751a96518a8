"""Command-line front end: ``mtjsnn <command> [--config FILE] [flags]``."""

import argparse
import itertools
import os
import sys

import numpy as np

from . import analysis, ann, config, device, snn
from .llg import FieldModel

EXIT_USAGE, EXIT_RUNTIME = 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _path(cfg, key, default_name):
    p = cfg[key]
    return p if p is not None else os.path.join(cfg["paths.outdir"], default_name)


def _eval_set(cfg):
    data = ann.load_mnist(cfg.require("paths.mnist_images"), cfg.require("paths.mnist_labels"))
    return data.subset(min(cfg["run.n_images"], len(data)))


def _model(cfg):
    path = _path(cfg, "paths.model", "model.txt")
    if not os.path.exists(path):
        raise UsageError(f"model file {path} not found; run 'train' first")
    model = ann.load_model(path)
    if cfg["run.quantize"]:
        model, _ = ann.clip_and_quantize(model)
    return model


def _curve(cfg, key="paths.curve"):
    path = _path(cfg, key, "curve.csv")
    if not os.path.exists(path):
        raise UsageError(f"curve file {path} not found; characterize first")
    curve = device.load_curve(path)
    t_w = cfg["char.t_w_ns"] * 1e-9
    if key == "paths.curve":
        if abs(curve.T_w - t_w) > 1e-6 * t_w or abs(curve.T_K - cfg["run.temp_k"]) > 1e-9:
            raise UsageError(
                f"curve {path} is for T_w={curve.T_w * 1e9:g} ns, T_K={curve.T_K:g} K; "
                f"config asks T_w={cfg['char.t_w_ns']:g} ns, T_K={cfg['run.temp_k']:g} K")
    return curve


def _instance(cfg, model):
    curve = _curve(cfg)
    calib = _curve(cfg, "paths.calib_curve") if cfg["paths.calib_curve"] else curve
    inst = snn.build_instance(model, calib, V_o=cfg["xbar.v_o"], R_HM=cfg["xbar.r_hm_ohm"],
                              scheme=cfg["xbar.scheme"])
    return inst, curve


def _sigma(cfg, key):
    vals = cfg.floats(key)
    if len(vals) != 1:
        raise UsageError(f"{key} takes a single value for this command")
    return vals[0]


def _program(cfg):
    model = _model(cfg)
    if cfg["run.mode"] == "ideal":
        return snn.ideal_program(model), None, None
    inst, curve = _instance(cfg, model)
    sg, sb = _sigma(cfg, "run.sigma_g"), _sigma(cfg, "run.sigma_bias")
    if sg or sb:
        from .crossbar import apply_variation

        inst = apply_variation(inst, sg, sb, cfg["run.master_seed"])
    return snn.hardware_program(inst, curve, cfg["run.curve_mode"]), inst, curve


# ---------------------------------------------------------------- commands


def cmd_characterize(cfg):
    params = cfg.device()
    fields = FieldModel.calibrated(params, cfg["device.n_z"])
    t_w = cfg["char.t_w_ns"] * 1e-9
    curve, _ = device.characterize(
        params, fields, t_w, n_trials=cfg["char.n_trials"], grid_points=cfg["char.grid_points"],
        seed=cfg["char.seed"], dt=cfg["char.dt_ps"] * 1e-12,
        relax_time=cfg["char.relax_ns"] * 1e-9, log=_log)
    path = _path(cfg, "paths.curve", "curve.csv")
    device.save_curve(curve, path)
    _log(f"wrote {path}")


def cmd_train(cfg):
    data = ann.load_mnist(cfg.require("paths.train_images", "training set"),
                          cfg.require("paths.train_labels", "training set"))
    model = ann.init_model(cfg["train.seed"])

    def log(epoch, value):
        _log(f"epoch {epoch + 1}: loss {value:.6f}")

    model, losses = ann.train(model, data, lr=cfg["train.lr"], batch=cfg["train.batch"],
                              epochs=cfg["train.epochs"], seed=cfg["train.seed"], log=log)
    path = _path(cfg, "paths.model", "model.txt")
    ann.save_model(model, path)
    with open(os.path.join(cfg["paths.outdir"], "train_loss.csv"), "w") as fh:
        fh.write("epoch,loss\n")
        for e, l in enumerate(losses, 1):
            fh.write(f"{e},{l:.9g}\n")
    _log(f"wrote {path}")


def cmd_run(cfg):
    data = _eval_set(cfg)
    program, _, _ = _program(cfg)
    r = snn.run_network(program, data.images, cfg["run.timesteps"], cfg["run.master_seed"])
    out = cfg["paths.outdir"]
    rows = analysis.accuracy_curve(r, data.labels)
    analysis.write_accuracy_curve(os.path.join(out, "accuracy.csv"), rows)
    analysis.write_predictions(os.path.join(out, "predictions.csv"), r, data.labels)
    _log(f"accuracy after {rows[-1][0]} steps: {rows[-1][1]:.4f}"
         + (f" ({r.saturated} saturated column evaluations)" if r.saturated else ""))


def cmd_sweep(cfg):
    if cfg["run.mode"] != "hardware":
        raise UsageError("sweep needs run.mode = hardware")
    data = _eval_set(cfg)
    inst, curve = _instance(cfg, _model(cfg))
    reports = []
    for sg, sb in itertools.product(cfg.floats("run.sigma_g"), cfg.floats("run.sigma_bias")):
        rep = analysis.variation_sweep(
            inst, curve, sg, sb, cfg["run.n_instances"], data.images, data.labels,
            T_N=cfg["run.timesteps"], master_seed=cfg["run.master_seed"],
            curve_mode=cfg["run.curve_mode"], baseline=False)
        _log(f"sigma_g {sg:g} sigma_bias {sb:g}: mean {rep.mean_accuracy:.4f} "
             f"std {rep.std_accuracy:.4f}")
        reports.append(rep)
    analysis.write_variation(os.path.join(cfg["paths.outdir"], "variation.csv"), reports)


def cmd_energy(cfg):
    if cfg["run.mode"] != "hardware":
        raise UsageError("energy needs run.mode = hardware")
    data = _eval_set(cfg)
    program, inst, curve = _program(cfg)
    r = snn.run_network(program, data.images, cfg["run.timesteps"], cfg["run.master_seed"])
    read = analysis.ReadParams(V_read=cfg["device.v_read_v"], R_P=cfg["read.r_p_ohm"],
                               R_AP=cfg["read.r_ap_ohm"])
    e = analysis.energy_per_image(r, cfg["xbar.v_o"], cfg["xbar.r_hm_ohm"], curve.T_w,
                                  curve.I_reset, read)
    analysis.write_energy(os.path.join(cfg["paths.outdir"], "energy.csv"), e)
    _log(f"energy per image {e.total_per_image * 1e9:.3f} nJ "
         f"(CMOS baseline {analysis.CMOS_BASELINE_J * 1e9:g} nJ)")


def cmd_error_grid(cfg):
    w = cfg["grid.w_max"]
    n = cfg["grid.resolution"]
    mx, ws, Is, err = analysis.approx_error_grid((-w, w), (0.0, 1.0), n)
    analysis.write_error_grid(os.path.join(cfg["paths.outdir"], "error_grid.csv"), ws, Is, err)
    _log(f"max error {mx:.6f}")


COMMANDS = {
    "characterize": (cmd_characterize, "Monte Carlo switching curve, bias, I_o and reset current"),
    "train": (cmd_train, "train the sigmoid CNN on the training set"),
    "run": (cmd_run, "spiking inference; writes accuracy.csv and predictions.csv"),
    "sweep": (cmd_sweep, "variation Monte Carlo; writes variation.csv"),
    "energy": (cmd_energy, "per-image energy of a hardware run; writes energy.csv"),
    "error-grid": (cmd_error_grid, "conversion-error field; writes error_grid.csv"),
}

# which seed --seed overrides for each command
SEED_KEY = {"characterize": "char.seed", "train": "train.seed", "run": "run.master_seed",
            "sweep": "run.master_seed", "energy": "run.master_seed", "error-grid": None}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file of 'key = value' lines")
    common.add_argument("--out", help="output directory (paths.outdir)")
    common.add_argument("--seed", type=int, help="seed of the command's random streams")
    common.add_argument("--threads", type=int, help="worker thread cap")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    p = _Parser(prog="mtjsnn", formatter_class=argparse.RawDescriptionHelpFormatter,
                description="MTJ-neuron spiking network co-simulation.",
                epilog="config keys:\n" + config.describe())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text,
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="config keys:\n" + config.describe())
    return p


def _configure(args):
    cfg = config.load(args.config) if args.config else config.Config()
    for item in args.set:
        k, sep, v = item.partition("=")
        if not sep:
            raise config.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(k.strip(), v)
    if args.out is not None:
        cfg.set("paths.outdir", args.out)
    if args.seed is not None and SEED_KEY[args.command]:
        cfg.set(SEED_KEY[args.command], args.seed)
    if args.threads is not None:
        cfg.set("threads", args.threads)
    if cfg["run.mode"] not in snn.MODES:
        raise config.ConfigError(f"run.mode must be one of {snn.MODES}")
    if cfg["run.curve_mode"] not in snn.CURVE_MODES:
        raise config.ConfigError(f"run.curve_mode must be one of {snn.CURVE_MODES}")
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _configure(args)
    except (config.ConfigError, OSError) as e:
        _log(f"mtjsnn: config error: {e}")
        return EXIT_USAGE
    import numba

    threads = numba.get_num_threads()
    if cfg["threads"] > 0:
        numba.set_num_threads(min(cfg["threads"], numba.config.NUMBA_NUM_THREADS))
    try:
        os.makedirs(cfg["paths.outdir"], exist_ok=True)
        COMMANDS[args.command][0](cfg)
    except (UsageError, config.ConfigError) as e:
        _log(f"mtjsnn {args.command}: {e}")
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError) as e:
        _log(f"mtjsnn {args.command}: {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    finally:
        numba.set_num_threads(threads)
    return 0


if __name__ == "__main__":
    sys.exit(main())
