"""Synthetic experiment generators.

The real laboratory logs are not available, so validation and demo data are
produced from a known model: a constant-current training discharge, an
intermittent discharge with long rests, and a drive-cycle-like
variable-current profile.
"""

from __future__ import annotations

import numpy as np

from .model import CurrentProfile, SimState, ThveninParams, simulate_times, voltage_constant_current
from .workflows import DEFAULT_NOISE_VARIANCE, DischargeDataset


def noise_stream(seed: int, run_index: int, n: int, variance: float) -> np.ndarray:
    """Gaussian noise keyed by ``(seed, run_index)``; sample k is always the k-th draw."""
    if variance == 0:
        return np.zeros(n)
    rng = np.random.default_rng([int(seed), int(run_index)])
    return rng.normal(0.0, np.sqrt(variance), n)


def constant_discharge(params: ThveninParams, current=-3.0, duration=2400.0, dt=1.0,
                       noise_variance=DEFAULT_NOISE_VARIANCE, seed=0, run_index=0,
                       cutoff_voltage=3.2) -> DischargeDataset:
    t = dt * np.arange(int(np.floor(duration / dt + 1e-9)) + 1)
    v = voltage_constant_current(params, current, t) + noise_stream(seed, run_index, t.size, noise_variance)
    return DischargeDataset(
        t, np.full_like(t, current), v, noise_variance=noise_variance, q_c=params.q_c,
        v_oc_min=params.v_oc_min, v_oc_max=params.v_oc_max, cutoff_voltage=cutoff_voltage,
    )


def _dataset_from_sim(sim, params, noise_variance, seed, run_index, soc0, cutoff_voltage):
    v = sim.v + noise_stream(seed, run_index, sim.t.size, noise_variance)
    return DischargeDataset(
        sim.t, sim.current, v, noise_variance=noise_variance, q_c=params.q_c,
        v_oc_min=params.v_oc_min, v_oc_max=params.v_oc_max, cutoff_voltage=cutoff_voltage, soc0=soc0,
    )


def intermittent_profile(params: ThveninParams, current=-1.0, on=600.0, rest=7200.0,
                         cutoff_voltage=3.2, max_pulses=100) -> CurrentProfile:
    """Pulse-rest cycles until the loaded voltage would cross the cut-off."""
    segments = []
    state = SimState()
    for _ in range(max_pulses):
        pulse = CurrentProfile.from_segments([(current, on)])
        grid = np.linspace(0.0, on, 61) + state.t
        sim = simulate_times(params, pulse, grid, state)
        if sim.v.min() < cutoff_voltage:
            break
        segments += [(current, on), (0.0, rest)]
        relax = simulate_times(params, CurrentProfile.constant(0.0), [grid[-1], grid[-1] + rest],
                               SimState(sim.soc[-1], sim.v_rc[-1], grid[-1]))
        state = SimState(relax.soc[-1], relax.v_rc[-1], relax.t[-1])
    return CurrentProfile.from_segments(segments)


def intermittent_dataset(params: ThveninParams, current=-1.0, on=600.0, rest=7200.0, dt=10.0,
                         noise_variance=0.0, seed=0, run_index=0, cutoff_voltage=3.2) -> DischargeDataset:
    profile = intermittent_profile(params, current, on, rest, cutoff_voltage)
    t_end = profile.times[-1] + rest
    t = dt * np.arange(int(np.floor(t_end / dt + 1e-9)) + 1)
    sim = simulate_times(params, profile, t)
    return _dataset_from_sim(sim, params, noise_variance, seed, run_index, 1.0, cutoff_voltage)


def udds_like_profile(seed=7, duration=2740.0, peak_discharge=-6.0, peak_charge=3.0) -> CurrentProfile:
    """Drive-cycle-like current: bursts of discharge, regenerative charge and idling."""
    rng = np.random.default_rng(seed)
    segments, acc = [], 0.0
    while acc < duration:
        length = float(rng.integers(4, 41))
        kind = rng.choice(3, p=[0.2, 0.6, 0.2])
        if kind == 0:
            cur = 0.0
        elif kind == 1:
            cur = float(rng.uniform(peak_discharge, -0.3))
        else:
            cur = float(rng.uniform(0.3, peak_charge))
        length = min(length, duration - acc)
        segments.append((round(cur, 3), length))
        acc += length
    return CurrentProfile.from_segments(segments)


def udds_like_dataset(params: ThveninParams, soc0=0.9, dt=1.0, duration=2740.0,
                      noise_variance=DEFAULT_NOISE_VARIANCE, seed=7, run_index=0,
                      cutoff_voltage=3.2) -> DischargeDataset:
    profile = udds_like_profile(seed, duration)
    t = dt * np.arange(int(np.floor(duration / dt + 1e-9)) + 1)
    sim = simulate_times(params, profile, t, SimState(soc=soc0))
    return _dataset_from_sim(sim, params, noise_variance, seed, run_index, soc0, cutoff_voltage)
