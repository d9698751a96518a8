"""Flat ``key = value`` configuration files.

Lines are ``key = value``; ``#`` starts a comment. Keys carry their unit in
the name. Unknown keys are rejected.
"""

from dataclasses import dataclass

from .llg import CONSTANTS, DeviceParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    name: str
    kind: type
    default: object
    help: str


def _keys():
    d = DeviceParams()
    kT300 = CONSTANTS.k_B * 300.0
    return [
        Key("device.fl_major_axis_nm", float, d.fl_major_axis * 1e9, "free-layer major axis, nm"),
        Key("device.fl_minor_axis_nm", float, d.fl_minor_axis * 1e9, "free-layer minor axis, nm"),
        Key("device.fl_thickness_nm", float, d.fl_thickness * 1e9, "free-layer thickness, nm"),
        Key("device.hm_thickness_nm", float, d.hm_thickness * 1e9, "heavy-metal thickness, nm"),
        Key("device.m_s_a_per_m", float, d.M_s, "saturation magnetization, A/m"),
        Key("device.theta_sh", float, d.theta_SH, "spin-Hall angle, dimensionless"),
        Key("device.alpha", float, d.alpha, "Gilbert damping, dimensionless"),
        Key("device.e_b_kt300", float, d.E_B / kT300, "energy barrier, units of k_B*300K"),
        Key("device.rho_hm_ohm_m", float, d.rho_HM, "heavy-metal resistivity, ohm*m"),
        Key("device.v_read_v", float, d.V_read, "read voltage, V"),
        Key("device.n_z", float, 0.94, "out-of-plane demagnetization factor, dimensionless"),
        Key("char.grid_points", int, 41, "currents per characterization grid, count"),
        Key("char.n_trials", int, 2000, "Monte Carlo trials per grid current, count"),
        Key("char.t_w_ns", float, 0.5, "write pulse width, ns (also selects the run curve)"),
        Key("char.temp_k", float, 300.0, "characterization temperature, K"),
        Key("char.seed", int, 0, "characterization seed, integer"),
        Key("char.dt_ps", float, 0.1, "integrator step, ps"),
        Key("char.relax_ns", float, 2.0, "post-pulse relaxation, ns"),
        Key("train.lr", float, 1.0, "learning rate, dimensionless"),
        Key("train.batch", int, 50, "mini-batch size, count"),
        Key("train.epochs", int, 20, "training epochs, count"),
        Key("train.seed", int, 0, "initialization and shuffling seed, integer"),
        Key("xbar.v_o", float, 1.0, "row spike voltage, V"),
        Key("xbar.scheme", str, "differential", "literal | differential conductance mapping"),
        Key("xbar.r_hm_ohm", float, 400.0, "neuron write-path resistance, ohm"),
        Key("read.r_p_ohm", float, 10e3, "neuron MTJ parallel resistance, ohm"),
        Key("read.r_ap_ohm", float, 20e3, "MTJ antiparallel (and reference) resistance, ohm"),
        Key("run.mode", str, "ideal", "ideal | hardware"),
        Key("run.curve_mode", str, "raw", "raw | sigmoid transfer in hardware mode"),
        Key("run.timesteps", int, 50, "time-steps per image, count"),
        Key("run.n_images", int, 1000, "test images evaluated (first n), count"),
        Key("run.master_seed", int, 0, "spike-stream seed, integer"),
        Key("run.temp_k", float, 300.0, "operating temperature of the run curve, K"),
        Key("run.sigma_g", str, "0", "conductance variation, fraction (comma list in sweep)"),
        Key("run.sigma_bias", str, "0", "bias-current variation, fraction (comma list in sweep)"),
        Key("run.n_instances", int, 50, "Monte Carlo chips per sweep point, count"),
        Key("run.quantize", bool, True, "clip and quantize the model before running, true | false"),
        Key("grid.w_max", float, 3.0, "error-grid weight half-range, dimensionless"),
        Key("grid.resolution", int, 601, "error-grid points per axis, count"),
        Key("paths.mnist_images", str, None, "evaluation IDX image file, path"),
        Key("paths.mnist_labels", str, None, "evaluation IDX label file, path"),
        Key("paths.train_images", str, None, "training IDX image file, path"),
        Key("paths.train_labels", str, None, "training IDX label file, path"),
        Key("paths.model", str, None, "model file, path (default <outdir>/model.txt)"),
        Key("paths.curve", str, None, "switching curve file, path (default <outdir>/curve.csv)"),
        Key("paths.calib_curve", str, None, "curve supplying I_bias and I_o if different, path"),
        Key("paths.outdir", str, ".", "output directory, path"),
        Key("threads", int, 0, "worker thread cap, count (0 = all cores)"),
    ]


KEYS = {k.name: k for k in _keys()}


def _convert(key, text):
    if key.kind is bool:
        t = text.lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key.name}: expected true/false, got {text!r}")
    try:
        return key.kind(text)
    except ValueError:
        raise ConfigError(f"{key.name}: cannot read {text!r} as {key.kind.__name__}") from None


class Config:
    def __init__(self, values=None):
        self._v = {k: key.default for k, key in KEYS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, name, value):
        if name not in KEYS:
            raise ConfigError(f"unknown config key {name!r}")
        key = KEYS[name]
        if isinstance(value, str):
            if value.strip() == "":
                raise ConfigError(f"missing value for {name}")
            value = _convert(key, value.strip())
        self._v[name] = value

    def __getitem__(self, name):
        if name not in KEYS:
            raise ConfigError(f"unknown config key {name!r}")
        return self._v[name]

    def require(self, name, hint=""):
        v = self[name]
        if v is None:
            raise ConfigError(f"missing config key {name}" + (f" ({hint})" if hint else ""))
        return v

    def floats(self, name):
        try:
            return [float(x) for x in str(self[name]).split(",")]
        except ValueError:
            raise ConfigError(f"{name}: expected comma-separated numbers") from None

    def device(self):
        c = self
        return DeviceParams(
            fl_major_axis=c["device.fl_major_axis_nm"] / 1e9,
            fl_minor_axis=c["device.fl_minor_axis_nm"] / 1e9,
            fl_thickness=c["device.fl_thickness_nm"] / 1e9,
            hm_thickness=c["device.hm_thickness_nm"] / 1e9,
            M_s=c["device.m_s_a_per_m"],
            theta_SH=c["device.theta_sh"],
            alpha=c["device.alpha"],
            E_B=c["device.e_b_kt300"] * CONSTANTS.k_B * 300.0,
            rho_HM=c["device.rho_hm_ohm_m"],
            T_K=c["char.temp_k"],
            R_HM=c["xbar.r_hm_ohm"],
            V_read=c["device.v_read_v"],
        )


def parse(text, source="<config>"):
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        k = k.strip()
        if k not in KEYS:
            raise ConfigError(f"{source}:{n}: unknown config key {k!r}")
        values[k] = v
    return Config(values)


def load(path):
    with open(path) as fh:
        return parse(fh.read(), str(path))


def describe():
    """One line per key: name, default and unit text."""
    w = max(len(k) for k in KEYS)
    lines = []
    for k in KEYS.values():
        d = "(none)" if k.default is None else (str(k.default).lower() if k.kind is bool else f"{k.default:g}" if k.kind is float else k.default)
        lines.append(f"  {k.name:<{w}}  {k.help} [default {d}]")
    return "\n".join(lines)
