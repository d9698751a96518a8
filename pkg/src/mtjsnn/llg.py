"""Stochastic Landau-Lifshitz-Gilbert macrospin with spin-orbit torque.

The free layer is a single in-plane elliptic nanomagnet. Its easy axis is
the major axis (x), z is out of plane, and the spin current injected by the
heavy-metal underlayer is polarized along +x for positive charge current.
The implicit Gilbert form

    dm/dt = -gamma m x H + alpha m x dm/dt + (1/(q N_s)) m x (I_s x m)

is solved for dm/dt, giving

    dm/dt = (T + alpha m x T) / (1 + alpha^2),
    T = -gamma m x H + a m x (p x m),   a = I_s / (q N_s).

Time stepping is stochastic Heun with one thermal-field sample per step.
"""

import csv
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import constants as _sc

from . import rng as _rng


@dataclass(frozen=True)
class PhysicalConstants:
    mu_B: float = _sc.physical_constants["Bohr magneton"][0]
    mu_0: float = _sc.mu_0
    hbar: float = _sc.hbar
    q_e: float = _sc.e
    k_B: float = _sc.k


CONSTANTS = PhysicalConstants()

#: gyromagnetic ratio 2 mu_B mu_0 / hbar, in m/(A s) so that gamma*H is 1/s
GAMMA = 2.0 * CONSTANTS.mu_B * CONSTANTS.mu_0 / CONSTANTS.hbar


@dataclass(frozen=True)
class DeviceParams:
    """Free-layer / heavy-metal device parameters (SI units)."""

    fl_major_axis: float = 100e-9
    fl_minor_axis: float = 40e-9
    fl_thickness: float = 1.2e-9
    hm_thickness: float = 2e-9
    M_s: float = 1.0e6
    theta_SH: float = 0.3
    alpha: float = 0.0122
    E_B: float = 20.0 * CONSTANTS.k_B * 300.0
    rho_HM: float = 200e-8
    T_K: float = 300.0
    R_HM: float = 400.0
    V_read: float = 1.0

    def __post_init__(self):
        if not self.fl_major_axis > self.fl_minor_axis > 0:
            raise ValueError("need fl_major_axis > fl_minor_axis > 0")
        if self.fl_thickness <= 0 or self.hm_thickness <= 0:
            raise ValueError("layer thicknesses must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.theta_SH < 1:
            raise ValueError("theta_SH must lie in (0, 1)")
        if self.E_B <= 0 or self.M_s <= 0:
            raise ValueError("E_B and M_s must be positive")
        if self.T_K < 0:
            raise ValueError("T_K must be non-negative")
        if self.R_HM <= 0:
            raise ValueError("R_HM must be positive")

    @property
    def area_mtj(self):
        return np.pi / 4.0 * self.fl_major_axis * self.fl_minor_axis

    @property
    def area_hm(self):
        # heavy-metal cross-section normal to the charge flow
        return self.fl_minor_axis * self.hm_thickness

    @property
    def volume(self):
        return self.area_mtj * self.fl_thickness

    @property
    def n_spins(self):
        return self.M_s * self.volume / CONSTANTS.mu_B

    def with_temperature(self, T_K):
        return _replace(self, T_K=T_K)


def _replace(obj, **changes):
    from dataclasses import replace

    return replace(obj, **changes)


@dataclass(frozen=True)
class FieldModel:
    demag_N: tuple = (0.0, 0.0, 1.0)
    easy_axis: tuple = (1.0, 0.0, 0.0)
    spin_polarization_axis: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        n = np.asarray(self.demag_N, dtype=float)
        if n.shape != (3,) or np.any(n < 0) or np.any(n > 1):
            raise ValueError("demagnetization factors must lie in [0, 1]")
        if abs(n.sum() - 1.0) > 1e-9:
            raise ValueError("demagnetization factors must sum to 1")

    @classmethod
    def calibrated(cls, params, n_z=0.94):
        """Thin-film demag factors whose in-plane barrier equals ``params.E_B``.

        The barrier of an in-plane ellipse is mu0 Ms^2 V (N_y - N_x) / 2; N_z
        is fixed and N_x, N_y follow from the sum rule.
        """
        dn = 2.0 * params.E_B / (CONSTANTS.mu_0 * params.M_s**2 * params.volume)
        n_x = 0.5 * (1.0 - n_z - dn)
        if n_x < 0:
            raise ValueError(
                f"barrier {params.E_B:.3g} J cannot be reached with N_z={n_z}")
        return cls(demag_N=(n_x, n_x + dn, n_z))

    def barrier(self, params):
        n_x, n_y, _ = self.demag_N
        return 0.5 * CONSTANTS.mu_0 * params.M_s**2 * params.volume * (n_y - n_x)


@dataclass
class MagnetState:
    m: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    t: float = 0.0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)


@dataclass(frozen=True)
class PulseSpec:
    I_q: float
    T_w: float
    relax_time: float = 2e-9
    dt: float = 1e-13

    def __post_init__(self):
        if self.T_w <= 0 or self.dt <= 0:
            raise ValueError("T_w and dt must be positive")
        if self.dt > self.T_w / 50 * (1 + 1e-12):
            raise ValueError("dt must not exceed T_w/50")
        if self.relax_time < 0:
            raise ValueError("relax_time must be non-negative")

    @property
    def n_pulse(self):
        return int(round(self.T_w / self.dt))

    @property
    def n_relax(self):
        return int(round(self.relax_time / self.dt))


class IntegratorError(RuntimeError):
    """Raised when the integrated state stops being finite."""


def spin_current(params, I_q):
    """Spin current injected into the free layer for HM charge current ``I_q``."""
    return params.theta_SH * (params.area_mtj / params.area_hm) * I_q


def sot_rate(params, I_s):
    """Spin-torque rate I_s / (q N_s) in 1/s."""
    return I_s / (CONSTANTS.q_e * params.n_spins)


def effective_field(state, fields, params, thermal=(0.0, 0.0, 0.0)):
    m = np.asarray(state.m if isinstance(state, MagnetState) else state, dtype=float)
    return -params.M_s * np.asarray(fields.demag_N) * m + np.asarray(thermal, dtype=float)


def thermal_sigma(params, dt):
    """Per-component standard deviation of the thermal field (A/m)."""
    a = params.alpha
    var = (a / (1.0 + a * a)) * 2.0 * CONSTANTS.k_B * params.T_K / (
        GAMMA * CONSTANTS.mu_0 * params.M_s * params.volume * dt)
    return np.sqrt(var)


def thermal_field_sample(params, dt, rng):
    if dt <= 0:
        raise ValueError("dt must be positive")
    return thermal_sigma(params, dt) * rng.standard_normal(3)


def tilt_sigma(params, fields=None):
    """RMS equilibrium tilts ``(in-plane, out-of-plane)`` about the easy axis.

    In plane <theta^2> = k_B T / (2 E_B). Out of plane the well is stiffer
    by (N_z - N_x) / (N_y - N_x), which shrinks the tilt accordingly.
    """
    s = np.sqrt(CONSTANTS.k_B * params.T_K / (2.0 * params.E_B))
    if fields is None:
        return s, s
    n_x, n_y, n_z = fields.demag_N
    return s, s * np.sqrt((n_y - n_x) / (n_z - n_x))


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True, inline="always")
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@nb.njit(cache=True, fastmath=True)
def _rhs(m0, m1, m2, hx, hy, hz, ms, nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2):
    h0 = hx - ms * nx * m0
    h1 = hy - ms * ny * m1
    h2 = hz - ms * nz * m2
    c0, c1, c2 = _cross(m0, m1, m2, h0, h1, h2)
    # m x (p x m) = p |m|^2 - m (m.p)
    mm = m0 * m0 + m1 * m1 + m2 * m2
    mp = m0 * p0 + m1 * p1 + m2 * p2
    t0 = -gamma * c0 + a_sot * (p0 * mm - m0 * mp)
    t1 = -gamma * c1 + a_sot * (p1 * mm - m1 * mp)
    t2 = -gamma * c2 + a_sot * (p2 * mm - m2 * mp)
    d0, d1, d2 = _cross(m0, m1, m2, t0, t1, t2)
    k = 1.0 / (1.0 + alpha * alpha)
    return (t0 + alpha * d0) * k, (t1 + alpha * d1) * k, (t2 + alpha * d2) * k


@nb.njit(cache=True, fastmath=True, error_model="numpy")
def _heun(m0, m1, m2, hx, hy, hz, dt, ms, nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2):
    k0, k1, k2 = _rhs(m0, m1, m2, hx, hy, hz, ms, nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2)
    q0 = m0 + dt * k0
    q1 = m1 + dt * k1
    q2 = m2 + dt * k2
    l0, l1, l2 = _rhs(q0, q1, q2, hx, hy, hz, ms, nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2)
    r0 = m0 + 0.5 * dt * (k0 + l0)
    r1 = m1 + 0.5 * dt * (k1 + l1)
    r2 = m2 + 0.5 * dt * (k2 + l2)
    norm = np.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
    return r0 / norm, r1 / norm, r2 / norm


@nb.njit(cache=True)
def _initial_state(key, sign, tilt_y, tilt_z):
    gy, gz = _rng.normal_pair(key, np.uint64(0))
    m0, m1, m2 = sign, tilt_y * gy, tilt_z * gz
    norm = np.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
    return m0 / norm, m1 / norm, m2 / norm


@nb.njit(cache=True)
def _integrate(m0, m1, m2, key, step0, n_steps, dt, sigma, ms, nx, ny, nz,
               gamma, alpha, a_sot, p0, p1, p2):
    # thermal component j of step s is normal number 3s+j; normals come in
    # pairs, so odd-offset steps reuse the spare left by the previous step
    spare = 0.0
    have_spare = False
    for s in range(step0, step0 + n_steps):
        idx = 3 * s
        pair = np.uint64(idx // 2)
        if idx % 2 == 0:
            hx, hy = _rng.normal_pair(key, pair)
            hz, spare = _rng.normal_pair(key, pair + np.uint64(1))
            have_spare = True
        else:
            if have_spare:
                hx = spare
            else:
                _, hx = _rng.normal_pair(key, pair)
            hy, hz = _rng.normal_pair(key, pair + np.uint64(1))
            have_spare = False
        m0, m1, m2 = _heun(m0, m1, m2, sigma * hx, sigma * hy, sigma * hz, dt, ms,
                           nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2)
    return m0, m1, m2


@nb.njit(cache=True, parallel=True)
def _trials_kernel(base_key, trial_ids, sign, tilt_y, tilt_z, n_pulse, n_relax, dt,
                   sigma, ms, nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2):
    n = trial_ids.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in nb.prange(n):
        key = _rng.fold(base_key, np.uint64(trial_ids[i]))
        m0, m1, m2 = _initial_state(_rng.fold(key, np.uint64(1)), sign, tilt_y, tilt_z)
        tkey = _rng.fold(key, np.uint64(0))
        m0, m1, m2 = _integrate(m0, m1, m2, tkey, 0, n_pulse, dt, sigma, ms, nx, ny, nz,
                                gamma, alpha, a_sot, p0, p1, p2)
        m0, m1, m2 = _integrate(m0, m1, m2, tkey, n_pulse, n_relax, dt, sigma, ms, nx,
                                ny, nz, gamma, alpha, 0.0, p0, p1, p2)
        if not (np.isfinite(m0) and np.isfinite(m1) and np.isfinite(m2)):
            out[i] = 2
        elif m0 * sign < 0:
            out[i] = 1
    return out


@nb.njit(cache=True)
def _trajectory_kernel(key, sign, tilt_y, tilt_z, n_pulse, n_relax, stride, dt, sigma,
                       ms, nx, ny, nz, gamma, alpha, a_sot, p0, p1, p2):
    n_total = n_pulse + n_relax
    n_rows = n_total // stride + 1
    out = np.empty((n_rows, 4))
    m0, m1, m2 = _initial_state(_rng.fold(key, np.uint64(1)), sign, tilt_y, tilt_z)
    tkey = _rng.fold(key, np.uint64(0))
    out[0, 0] = 0.0
    out[0, 1], out[0, 2], out[0, 3] = m0, m1, m2
    row = 1
    for n in range(n_total):
        a = a_sot if n < n_pulse else 0.0
        m0, m1, m2 = _integrate(m0, m1, m2, tkey, n, 1, dt, sigma, ms, nx, ny, nz,
                                gamma, alpha, a, p0, p1, p2)
        if (n + 1) % stride == 0:
            out[row, 0] = (n + 1) * dt
            out[row, 1], out[row, 2], out[row, 3] = m0, m1, m2
            row += 1
    return out[:row]


# ---------------------------------------------------------------- python API


def llg_rhs(m, H, params, I_s=0.0, fields=None):
    """Explicit dm/dt for total field ``H`` (demag not added) and spin current ``I_s``."""
    p = np.asarray((fields or FieldModel()).spin_polarization_axis, dtype=float)
    a = sot_rate(params, I_s)
    m = np.asarray(m, dtype=float)
    return np.array(_rhs(m[0], m[1], m[2], H[0], H[1], H[2], 0.0, 0.0, 0.0, 0.0,
                         GAMMA, params.alpha, a, p[0], p[1], p[2]))


def llg_step(state, fields, params, I_s, dt, rng=None, thermal=None):
    """Advance ``state`` by one stochastic Heun step.

    The thermal field is drawn from ``rng`` unless given explicitly; with
    neither (or ``T_K == 0``) the step is deterministic.
    """
    if thermal is None:
        thermal = (thermal_field_sample(params, dt, rng)
                   if rng is not None and params.T_K > 0 else np.zeros(3))
    m = state.m
    nx, ny, nz = fields.demag_N
    p = np.asarray(fields.spin_polarization_axis, dtype=float)
    new = _heun(m[0], m[1], m[2], thermal[0], thermal[1], thermal[2], dt, params.M_s,
                nx, ny, nz, GAMMA, params.alpha, sot_rate(params, I_s), p[0], p[1], p[2])
    new = np.array(new)
    if not np.all(np.isfinite(new)):
        raise IntegratorError("non-finite magnetization; reduce dt")
    return MagnetState(new, state.t + dt)


def _kernel_args(params, fields, I_q, dt):
    nx, ny, nz = fields.demag_N
    p = np.asarray(fields.spin_polarization_axis, dtype=float)
    a = sot_rate(params, spin_current(params, I_q))
    sigma = thermal_sigma(params, dt)
    return (dt, sigma, params.M_s, nx, ny, nz, GAMMA, params.alpha, a, p[0], p[1], p[2])


def run_trials(params, fields, pulse, seed, trials, reverse=False, stream=()):
    """Switching outcomes for the trials numbered ``trials``.

    Trial ``k`` is a pure function of ``(params, fields, pulse, seed,
    stream, k)``; ``stream`` is a tuple of extra indices selecting an
    independent family of trials.
    Forward trials start in the AP well (m ~ -x) and count a switch when the
    final m_x > 0; reverse trials start near +x and switch when m_x < 0.
    """
    trials = np.asarray(trials, dtype=np.int64)
    sign = 1.0 if reverse else -1.0
    out = _trials_kernel(_rng.stream_key(seed, *stream), trials, sign, *tilt_sigma(params, fields),
                         pulse.n_pulse, pulse.n_relax,
                         *_kernel_args(params, fields, pulse.I_q, pulse.dt))
    if np.any(out == 2):
        raise IntegratorError("non-finite magnetization; reduce dt")
    return out.astype(bool)


def switching_trial(params, fields, pulse, seed, trial=0, reverse=False,
                    record_stride=None, stream=()):
    """Single switching trial; optionally returns the sampled trajectory.

    Returns ``(switched, trajectory)`` where ``trajectory`` is an array of
    rows ``(t, mx, my, mz)`` or ``None``.
    """
    if record_stride is None:
        return bool(run_trials(params, fields, pulse, seed, [trial], reverse, stream)[0]), None
    key = np.uint64(_rng.fold(_rng.stream_key(seed, *stream), np.uint64(trial)))
    sign = 1.0 if reverse else -1.0
    traj = _trajectory_kernel(key, sign, *tilt_sigma(params, fields), pulse.n_pulse,
                              pulse.n_relax, int(record_stride),
                              *_kernel_args(params, fields, pulse.I_q, pulse.dt))
    if not np.all(np.isfinite(traj)):
        raise IntegratorError("non-finite magnetization; reduce dt")
    switched = traj[-1, 1] * sign < 0
    return bool(switched), traj


def write_trajectory(path, trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "mx", "my", "mz"])
        for row in trajectory:
            w.writerow([f"{v:.9g}" for v in row])
