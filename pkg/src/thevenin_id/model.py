"""One-RC Thevenin battery model.

Parameters live in the 9-vector ``theta = [a1, a2, a3, a4, b0, b1, b2, R, 1/(RC)]``.
The constant term and the fifth-order OCV coefficient are pinned by the
OCV end points, so they are derived rather than stored.

Current sign: negative discharges the cell.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SocOutOfRange

PARAM_NAMES = ("alpha1", "alpha2", "alpha3", "alpha4", "beta0", "beta1", "beta2", "r", "rc_inv")
N_PARAMS = len(PARAM_NAMES)


@dataclass(frozen=True)
class ThveninParams:
    alpha: tuple[float, float, float, float]
    beta0: float
    beta1: float
    beta2: float
    r: float
    rc_inv: float
    q_c: float = 2.17
    v_oc_min: float = 3.3
    v_oc_max: float = 4.15

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) != 4:
            raise ConfigError("alpha needs exactly 4 coefficients")
        if not self.v_oc_min < self.v_oc_max:
            raise ConfigError("v_oc_min must be below v_oc_max")
        if self.q_c <= 0:
            raise ConfigError("capacity must be positive")

    @classmethod
    def from_vector(cls, theta, q_c=2.17, v_oc_min=3.3, v_oc_max=4.15, *, check=False):
        """Build from a 9-vector.

        The default path is "raw": no sign checks, since unconstrained solvers
        may legitimately visit unphysical points. Pass ``check=True`` to enforce
        physical validity.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (N_PARAMS,):
            raise ConfigError(f"theta must have shape ({N_PARAMS},), got {theta.shape}")
        p = cls(tuple(theta[:4]), *map(float, theta[4:]), q_c=q_c, v_oc_min=v_oc_min, v_oc_max=v_oc_max)
        if check:
            p.validate()
        return p

    def validate(self):
        if not (self.beta0 > 0 and self.beta1 >= 0 and self.beta2 >= 0 and self.r > 0 and self.rc_inv > 0):
            raise ConfigError(f"physically invalid parameters: {self.vector().tolist()}")
        return self

    def vector(self) -> np.ndarray:
        return np.array([*self.alpha, self.beta0, self.beta1, self.beta2, self.r, self.rc_inv])

    def replace_vector(self, theta) -> "ThveninParams":
        return ThveninParams.from_vector(theta, self.q_c, self.v_oc_min, self.v_oc_max)

    @property
    def alpha0(self) -> float:
        return self.v_oc_min

    @property
    def alpha5(self) -> float:
        return self.v_oc_max - self.v_oc_min - sum(self.alpha)

    @property
    def ocv_coefficients(self) -> np.ndarray:
        """All six OCV coefficients, lowest order first."""
        return np.array([self.alpha0, *self.alpha, self.alpha5])

    @property
    def capacitance(self) -> float:
        return 1.0 / (self.r * self.rc_inv)


def nominal_params() -> ThveninParams:
    """Parameters used to generate the synthetic Monte Carlo data."""
    return ThveninParams((2.61, -9.36, 19.7, -19.0), 0.0313, 0.0678, 13.2, 0.0313, 0.0172)


def ocv(params: ThveninParams, soc):
    c = params.ocv_coefficients
    soc = np.asarray(soc, dtype=float)
    # Horner, highest order first
    out = np.full_like(soc, c[5])
    for a in c[4::-1]:
        out = out * soc + a
    return out if out.ndim else float(out)


def r0(params: ThveninParams, soc):
    out = params.beta0 + params.beta1 * np.exp(-params.beta2 * np.asarray(soc, dtype=float))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class CurrentProfile:
    """Piecewise-constant current: ``currents[i]`` holds on ``[times[i], times[i+1])``.

    The last current holds indefinitely.
    """

    times: np.ndarray
    currents: np.ndarray
    kind: str = "piecewise-constant"

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        i = np.atleast_1d(np.asarray(self.currents, dtype=float))
        if t.shape != i.shape or t.size == 0:
            raise ConfigError("profile times and currents must be non-empty and equally long")
        if t[0] != 0.0:
            raise ConfigError("profile must start at t=0")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("profile times must be strictly increasing")
        t.flags.writeable = False
        i.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "currents", i)
        if self.kind not in ("constant", "piecewise-constant"):
            raise ConfigError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def constant(cls, current: float) -> "CurrentProfile":
        return cls(np.array([0.0]), np.array([float(current)]), kind="constant")

    @classmethod
    def from_segments(cls, segments) -> "CurrentProfile":
        """``segments`` is an iterable of ``(current, duration)`` pairs."""
        t, cur, acc = [], [], 0.0
        for current, duration in segments:
            t.append(acc)
            cur.append(current)
            acc += duration
        return cls(np.array(t), np.array(cur))

    def current_at(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.currents[np.clip(idx, 0, None)]

    def charge(self, t):
        """Integral of current over ``[0, t]`` in ampere-seconds."""
        t = np.asarray(t, dtype=float)
        seg_len = np.diff(self.times)
        cum = np.concatenate([[0.0], np.cumsum(self.currents[:-1] * seg_len)])
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        return cum[idx] + self.currents[idx] * (t - self.times[idx])


@dataclass(frozen=True)
class SimState:
    soc: float = 1.0
    v_rc: float = 0.0
    t: float = 0.0


def soc_constant(params: ThveninParams, current, t, soc0=1.0):
    return soc0 + current * np.asarray(t, dtype=float) / (3600.0 * params.q_c)


def soc_trajectory(params: ThveninParams, profile: CurrentProfile, t, soc0=1.0):
    out = soc0 + profile.charge(t) / (3600.0 * params.q_c)
    return out if np.ndim(out) else float(out)


def voltage_from_vector(theta, current, t, q_c, v_oc_min, v_oc_max):
    """Constant-current terminal voltage for a raw parameter vector.

    Hot path for the solvers; no dataclass construction.
    """
    th = theta
    t = np.asarray(t, dtype=float)
    soc = 1.0 + current * t / (3600.0 * q_c)
    a5 = v_oc_max - v_oc_min - (th[0] + th[1] + th[2] + th[3])
    ocv_ = v_oc_min + soc * (th[0] + soc * (th[1] + soc * (th[2] + soc * (th[3] + soc * a5))))
    return ocv_ + current * (th[4] + th[5] * np.exp(-th[6] * soc) + th[7] * (1.0 - np.exp(-th[8] * t)))


def voltage_constant_current(params: ThveninParams, current: float, t):
    out = voltage_from_vector(params.vector(), current, t, params.q_c, params.v_oc_min, params.v_oc_max)
    return out if np.ndim(out) else float(out)


def _warn_soc(soc):
    if np.any(soc < 0.0) or np.any(soc > 1.0 + 1e-12):
        warnings.warn(
            f"SoC left [0, 1] (range {np.min(soc):.4g}..{np.max(soc):.4g}); values are extrapolated",
            SocOutOfRange,
            stacklevel=3,
        )


@dataclass
class SimResult:
    t: np.ndarray
    soc: np.ndarray
    v_rc: np.ndarray
    v: np.ndarray
    current: np.ndarray

    def rows(self):
        return list(zip(self.t, self.soc, self.v_rc, self.v))


def simulate_times(params: ThveninParams, profile: CurrentProfile, times,
                   initial: SimState | None = None) -> SimResult:
    """Replay a piecewise-constant current profile at the requested instants.

    ``times`` are absolute and must start at ``initial.t``; the profile clock
    starts there too. The RC branch is propagated with the exact zero-order-hold
    solution inside each constant-current stretch, so constant current
    reproduces the closed form. Current switches falling between output
    instants are honoured by sub-stepping at the switch.
    """
    initial = initial or SimState()
    t_out = np.asarray(times, dtype=float)
    if t_out.ndim != 1 or t_out.size == 0 or np.any(np.diff(t_out) <= 0):
        raise ConfigError("output times must be a non-empty increasing sequence")
    rel = t_out - initial.t
    if abs(rel[0]) > 1e-12:
        raise ConfigError("output times must start at the initial state time")
    switches = profile.times[(profile.times > rel[0]) & (profile.times < rel[-1])]
    grid = np.union1d(rel, switches)
    is_out = np.isin(grid, rel)

    soc = initial.soc + profile.charge(grid) / (3600.0 * params.q_c)
    seg_current = profile.current_at(grid[:-1])
    decay = np.exp(-params.rc_inv * np.diff(grid))
    drive = params.r * (1.0 - decay) * seg_current
    v_rc = np.empty_like(grid)
    v_rc[0] = initial.v_rc
    for k in range(grid.size - 1):
        v_rc[k + 1] = v_rc[k] * decay[k] - drive[k]
    current = profile.current_at(grid)
    v = ocv(params, soc) - v_rc + r0(params, soc) * current
    _warn_soc(soc)
    return SimResult(grid[is_out] + initial.t, soc[is_out], v_rc[is_out], v[is_out], current[is_out])


def simulate(params: ThveninParams, profile: CurrentProfile, dt: float, t_end: float,
             initial: SimState | None = None) -> SimResult:
    """Uniform-step replay over ``[0, t_end]`` relative to the initial state."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    initial = initial or SimState()
    n = int(np.floor(t_end / dt + 1e-9)) + 1
    return simulate_times(params, profile, initial.t + dt * np.arange(n), initial)
