"""Monte Carlo characterization of MTJ switching probability versus current.

All grid points of one curve share the same random trial streams (common
random numbers), so the estimated curve is far smoother than independent
sampling would give while each point is still a plain binomial estimate.
"""

import decimal
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, isotonic_regression, minimize_scalar

from .llg import PulseSpec, run_trials

FORWARD, REVERSE = 0, 1


class GridUnderSpanned(ValueError):
    pass


class NotBracketed(ValueError):
    pass


class CurveFormatError(ValueError):
    pass


class PoorSigmoidFit(UserWarning):
    pass


@dataclass
class SwitchCurve:
    """Switching probability table for one (pulse width, temperature).

    Currents are charge-current magnitudes in A; probabilities are switching
    fractions over ``n_trials`` Monte Carlo trials per point.
    """

    T_w: float
    T_K: float
    I_q: np.ndarray
    p: np.ndarray
    n_trials: np.ndarray
    I_bias: float = float("nan")
    I_o: float = float("nan")
    I_reset: float = float("nan")
    seed: int = 0
    fit_rmse: float = float("nan")
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.I_q = np.asarray(self.I_q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.n_trials = np.asarray(self.n_trials, dtype=np.int64)

    @property
    def sigma(self):
        """Binomial standard error of each point (floored at p = 1/n)."""
        pc = np.clip(self.p, 1.0 / self.n_trials, 1 - 1.0 / self.n_trials)
        return np.sqrt(pc * (1 - pc) / self.n_trials)

    def validate(self):
        if len(self.I_q) < 2:
            raise ValueError("a curve needs at least two points")
        if not (len(self.I_q) == len(self.p) == len(self.n_trials)):
            raise ValueError("point arrays differ in length")
        if np.any(np.diff(self.I_q) <= 0):
            raise ValueError("currents must be strictly increasing")
        if np.any((self.p < 0) | (self.p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(self.n_trials <= 0):
            raise ValueError("trial counts must be positive")
        if np.any(np.abs(self.p - self.isotonic()) >= 3 * self.sigma):
            raise ValueError("curve is not monotone within 3 binomial sigma")
        return self

    def isotonic(self):
        """Weighted isotonic fit of the point probabilities."""
        return isotonic_regression(self.p, weights=self.n_trials.astype(float)).x

    def add_point(self, I_q, p, n_trials):
        i = int(np.searchsorted(self.I_q, I_q))
        if i < len(self.I_q) and self.I_q[i] == I_q:
            tot = self.n_trials[i] + n_trials
            self.p[i] = (self.p[i] * self.n_trials[i] + p * n_trials) / tot
            self.n_trials[i] = tot
        else:
            self.I_q = np.insert(self.I_q, i, I_q)
            self.p = np.insert(self.p, i, p)
            self.n_trials = np.insert(self.n_trials, i, n_trials)
        self._interp = None

    def prob(self, I_q):
        """Monotone (isotonic + PCHIP) interpolant, clamped outside the grid."""
        if self._interp is None:
            self._interp = PchipInterpolator(self.I_q, self.isotonic(), extrapolate=False)
        x = np.clip(np.asarray(I_q, dtype=float), self.I_q[0], self.I_q[-1])
        return self._interp(x)

    def sigmoid(self, I_q):
        return 1.0 / (1.0 + np.exp(-(np.asarray(I_q) - self.I_bias) / self.I_o))

    def table(self, n=4097):
        """``(I_lo, step, values)`` sampling of :meth:`prob` on a uniform grid."""
        grid = np.linspace(self.I_q[0], self.I_q[-1], n)
        return self.I_q[0], grid[1] - grid[0], self.prob(grid)


def measure(params, fields, T_w, I_q, n_trials, seed, reverse=False, first_trial=0,
            dt=1e-13, relax_time=2e-9, stream=None):
    """Switching fraction at one current."""
    pulse = PulseSpec(-I_q if reverse else I_q, T_w, relax_time=relax_time, dt=dt)
    tag = (REVERSE if reverse else FORWARD,) if stream is None else tuple(stream)
    hits = run_trials(params, fields, pulse, seed,
                      np.arange(first_trial, first_trial + n_trials), reverse, tag)
    return float(hits.mean())


def estimate_curve(params, fields, T_w, current_grid, n_trials=2000, seed=0,
                   reverse=False, dt=1e-13, relax_time=2e-9, require_saturation=True):
    """Switching fraction at each grid current (points only).

    Raises GridUnderSpanned when a forward curve never reaches p >= 0.99.
    """
    grid = np.asarray(current_grid, dtype=float)
    if n_trials < 500:
        raise ValueError("n_trials must be at least 500")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("current grid must be strictly increasing")
    p = np.array([measure(params, fields, T_w, I, n_trials, seed, reverse, dt=dt,
                          relax_time=relax_time) for I in grid])
    if require_saturation and p.max() < 0.99:
        raise GridUnderSpanned(
            f"max switching probability {p.max():.3f} < 0.99; extend the grid")
    return SwitchCurve(T_w, params.T_K, grid, p, np.full(len(grid), n_trials), seed=seed)


def rough_critical_current(params, fields, T_w, seed=0, n_trials=200, dt=1e-13,
                           relax_time=2e-9, start=10e-6, iters=8):
    """Coarse bisection for the current giving p ~ 0.5."""
    hi = start
    while measure(params, fields, T_w, hi, n_trials, seed, dt=dt, relax_time=relax_time) < 0.5:
        hi *= 2
        if hi > 1.0:
            raise RuntimeError("no switching below 1 A")
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if measure(params, fields, T_w, mid, n_trials, seed, dt=dt,
                   relax_time=relax_time) < 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_grid(params, fields, T_w, points=41, seed=0, dt=1e-13, relax_time=2e-9):
    """``points`` currents from 0 to 2.5x the rough critical current.

    The top is pushed out in 25% steps while a coarse 200-trial estimate
    there stays below 0.995, so wide short-pulse curves still saturate.
    """
    top = 2.5 * rough_critical_current(params, fields, T_w, seed, dt=dt,
                                       relax_time=relax_time)
    while measure(params, fields, T_w, top, 200, seed, dt=dt,
                  relax_time=relax_time) < 0.995:
        top *= 1.25
    return np.linspace(0.0, top, points)


def _crossing(curve, level):
    iso = curve.isotonic()
    above = np.nonzero(iso >= level)[0]
    below = np.nonzero(iso < level)[0]
    if len(above) == 0 or len(below) == 0 or below[0] > above[0]:
        raise NotBracketed(f"p = {level} is not bracketed by the curve")
    hi = above[0]
    lo = hi - 1
    f = lambda x: float(curve.prob(x)) - level
    if f(curve.I_q[hi]) == 0:
        return float(curve.I_q[hi])
    return brentq(f, curve.I_q[lo], curve.I_q[hi], xtol=1e-12)


def solve_bias(curve, refine=None, max_iter=12):
    """Current where the monotone interpolant crosses 0.5.

    ``refine(I) -> (p, n)`` runs extra trials at a candidate current; the
    point is added to the curve and the root re-solved until the measured
    probability is within two binomial sigmas of 0.5. The result is also
    stored in ``curve.I_bias``.
    """
    I = _crossing(curve, 0.5)
    if refine is not None:
        n_ref = int(np.max(curve.n_trials))
        eps = 2.0 * math.sqrt(0.25 / n_ref)
        for _ in range(max_iter):
            p, n = refine(I)
            curve.add_point(I, p, n)
            if abs(p - 0.5) <= eps:
                break
            I = _crossing(curve, 0.5)
        else:
            raise RuntimeError("bias refinement did not converge")
    curve.I_bias = float(I)
    return curve.I_bias


def fit_sigmoid(curve):
    """Least-squares sigmoid scale ``I_o`` with the centre fixed at ``I_bias``.

    Stores ``I_o`` and the fit RMSE on the curve; warns when RMSE > 0.08.
    """
    if not np.isfinite(curve.I_bias):
        raise ValueError("solve the bias current first")
    x = curve.I_q - curve.I_bias
    span = curve.I_q[-1] - curve.I_q[0]

    def sse(log_io):
        return np.sum((curve.p - 1.0 / (1.0 + np.exp(-x / np.exp(log_io)))) ** 2)

    res = minimize_scalar(sse, bounds=(math.log(span * 1e-4), math.log(span)),
                          method="bounded", options={"xatol": 1e-10})
    curve.I_o = float(math.exp(res.x))
    curve.fit_rmse = float(math.sqrt(res.fun / len(x)))
    if curve.fit_rmse > 0.08:
        warnings.warn(f"poor sigmoid fit (RMSE {curve.fit_rmse:.3f})", PoorSigmoidFit)
    return curve.I_o


def solve_reset(curve_reverse, p_target=0.999):
    """Smallest grid current whose P->AP switching fraction reaches ``p_target``."""
    ok = np.nonzero(curve_reverse.p >= p_target)[0]
    if len(ok) == 0:
        raise GridUnderSpanned(f"reset probability {p_target} not reached on the grid")
    return float(curve_reverse.I_q[ok[0]])


def characterize(params, fields, T_w, n_trials=2000, grid_points=41, seed=0,
                 dt=1e-13, relax_time=2e-9, grid=None, log=None):
    """Full pipeline: grid, forward curve, bias, sigmoid fit, reset current.

    The reverse (P->AP) curve is only sampled at grid currents at or above
    the bias point, which is where the reset current must lie.
    """
    say = log or (lambda msg: None)
    if grid is None:
        grid = default_grid(params, fields, T_w, grid_points, seed, dt, relax_time)
        say(f"grid 0 .. {grid[-1] * 1e6:.2f} uA")
    curve = estimate_curve(params, fields, T_w, grid, n_trials, seed, dt=dt,
                           relax_time=relax_time)

    def refine(I):
        return measure(params, fields, T_w, I, n_trials, seed, dt=dt,
                       relax_time=relax_time), n_trials

    solve_bias(curve, refine)
    fit_sigmoid(curve)
    say(f"I_bias {curve.I_bias * 1e6:.3f} uA, I_o {curve.I_o * 1e6:.3f} uA, "
        f"rmse {curve.fit_rmse:.4f}")
    # short pulses may need more reset current than the forward grid spans,
    # so keep stepping past its top (up to 4x) at the grid spacing
    step = grid[1] - grid[0]
    upper = list(grid[grid >= curve.I_bias])
    rev = []
    while len(rev) < len(upper):
        I = upper[len(rev)]
        rev.append(measure(params, fields, T_w, I, n_trials, seed, reverse=True, dt=dt,
                           relax_time=relax_time))
        if rev[-1] >= 0.999:
            break
        if len(rev) == len(upper) and I + step <= 4 * grid[-1]:
            upper.append(I + step)
    reverse = SwitchCurve(T_w, params.T_K, np.array(upper[:len(rev)]), rev,
                          np.full(len(rev), n_trials))
    curve.I_reset = solve_reset(reverse)
    say(f"I_reset {curve.I_reset * 1e6:.3f} uA")
    return curve, reverse


# ---------------------------------------------------------------- persistence

def _scaled(x, exp):
    """Shortest decimal for ``x * 10**exp`` that reads back to exactly ``x``."""
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    with decimal.localcontext() as ctx:
        ctx.prec = 80
        exact = decimal.Decimal(x).scaleb(exp)
        for digits in range(12, 40):
            text = f"{exact:.{digits}g}"
            if _unscaled(text, exp) == x:
                return text
    return f"{exact}"


def _unscaled(text, exp):
    with decimal.localcontext() as ctx:
        ctx.prec = 80
        return float(decimal.Decimal(text).scaleb(-exp))


_HEADER_KEYS = ("t_w_ns", "temp_k", "n_trials", "seed", "i_bias_uA", "i_o_uA", "i_reset_uA")


def save_curve(curve, path):
    head = dict(t_w_ns=_scaled(curve.T_w, 9), temp_k=repr(float(curve.T_K)),
                n_trials=str(int(np.max(curve.n_trials))), seed=str(int(curve.seed)),
                i_bias_uA=_scaled(curve.I_bias, 6), i_o_uA=_scaled(curve.I_o, 6),
                i_reset_uA=_scaled(curve.I_reset, 6))
    lines = [f"# {k}={head[k]}" for k in _HEADER_KEYS]
    lines.append("i_q_uA,p_switch,n_trials")
    for I, p, n in zip(curve.I_q, curve.p, curve.n_trials):
        lines.append(f"{_scaled(I, 6)},{float(p)!r},{int(n)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_curve(path):
    head = {}
    rows = []
    with open(path) as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    seen_columns = False
    for lineno, line in enumerate(lines, 1):
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep or key not in _HEADER_KEYS:
                raise CurveFormatError(f"line {lineno}: bad header {line!r}")
            try:
                head[key] = value.strip()
                float(head[key])
            except ValueError:
                raise CurveFormatError(f"line {lineno}: bad value {value!r}") from None
        elif not seen_columns:
            if line.strip() != "i_q_uA,p_switch,n_trials":
                raise CurveFormatError(f"line {lineno}: expected column header")
            seen_columns = True
        else:
            parts = line.split(",")
            if len(parts) != 3:
                raise CurveFormatError(f"line {lineno}: expected 3 fields, got {len(parts)}")
            try:
                rows.append((_unscaled(parts[0], 6), float(parts[1]), int(parts[2])))
            except ValueError:
                raise CurveFormatError(f"line {lineno}: unparsable row {line!r}") from None
    missing = [k for k in _HEADER_KEYS if k not in head]
    if missing:
        raise CurveFormatError(f"missing header keys {missing}")
    if not seen_columns or not rows:
        raise CurveFormatError(f"line {len(lines)}: no data rows")
    arr = np.array([r[:2] for r in rows])
    try:
        seed = int(head["seed"])
    except ValueError:
        raise CurveFormatError(f"bad seed {head['seed']!r}") from None
    curve = SwitchCurve(
        T_w=_unscaled(head["t_w_ns"], 9), T_K=float(head["temp_k"]), I_q=arr[:, 0], p=arr[:, 1],
        n_trials=[r[2] for r in rows], I_bias=_unscaled(head["i_bias_uA"], 6),
        I_o=_unscaled(head["i_o_uA"], 6), I_reset=_unscaled(head["i_reset_uA"], 6), seed=seed)
    curve.validate()
    if np.isfinite(curve.I_o) and np.isfinite(curve.I_bias):
        x = curve.I_q - curve.I_bias
        curve.fit_rmse = float(np.sqrt(np.mean((curve.p - 1 / (1 + np.exp(-x / curve.I_o))) ** 2)))
    return curve
