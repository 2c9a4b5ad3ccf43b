"""Dynamic vertical interaction between a moving upper and a stationary lower
vehicle: sinusoidal separation schedules, a lagged load response, phase
averaging and hysteresis-loop metrics.

The response model relaxes toward a velocity-aware quasi-static target with
the wake-convection time constant tau(dz) = dz / U_i. The target scales the
static deficit by the squared encounter-velocity ratio (1 - dzdot/u_wake)^2
with u_wake = dz / tau, so an approaching upper vehicle (dzdot < 0) deepens
the deficit and a retreating one relieves it. A zero tau disables both the
relaxation and the modulation, collapsing the response onto the static map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import AliasingError, BinningError, DomainError
from .loads import LoadGrid, _interp_surfaces

#: Separation schedule ranges covered by the published dynamic protocol.
PROTOCOL_RANGES = {
    "dz_min": (0.005, 0.07),
    "frequency": (0.1, 1.0),
    "amplitude": (0.025, 0.09),
}

OFFSET_DX_OVER_L = 2.0  # lateral offset of the "offset" configuration


@dataclass(frozen=True)
class DynamicProfile:
    """Sinusoidal separation schedule dz(t) = dz_min + A (1 + sin(2 pi f t)).

    Amplitudes ramp linearly over the first and last cycles; only the stable
    cycles between them enter the analysis. Lengths in meters, frequency in
    hertz. extended=True lifts the protocol range checks.
    """

    dz_min: float
    amplitude: float
    frequency: float
    configuration: str = "stacked"
    ramp_up_cycles: int = 4
    stable_cycles: int = 40
    ramp_down_cycles: int = 4
    sample_rate: float = 200.0
    extended: bool = False

    def __post_init__(self):
        if self.configuration not in ("stacked", "offset"):
            raise DomainError("configuration must be 'stacked' or 'offset'")
        if min(self.dz_min, self.amplitude, self.frequency, self.sample_rate) <= 0:
            raise DomainError("dz_min, amplitude, frequency, sample_rate must be positive")
        if min(self.ramp_up_cycles, self.stable_cycles, self.ramp_down_cycles) < 0:
            raise DomainError("cycle counts must be non-negative")
        if self.stable_cycles < 1:
            raise DomainError("at least one stable cycle is required")
        if not self.extended:
            for name, (lo, hi) in PROTOCOL_RANGES.items():
                value = getattr(self, name if name != "dz_min" else "dz_min")
                if not lo <= value <= hi:
                    raise DomainError(
                        f"{name} = {value:g} outside the protocol range [{lo:g}, {hi:g}]; "
                        "pass extended=True to override"
                    )

    @property
    def total_cycles(self):
        return self.ramp_up_cycles + self.stable_cycles + self.ramp_down_cycles

    @property
    def period(self):
        return 1.0 / self.frequency

    @property
    def dx_over_l(self):
        return 0.0 if self.configuration == "stacked" else OFFSET_DX_OVER_L

    def stable_window(self):
        """(t_start, t_end) of the stable cycles."""
        return self.ramp_up_cycles * self.period, \
            (self.ramp_up_cycles + self.stable_cycles) * self.period


def separation_trajectory(profile: DynamicProfile, t):
    """Separation and separation rate at time(s) t >= 0.

    During ramp cycles the amplitude envelope scales linearly between 0 and
    the target amplitude; the returned rate includes the envelope term.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be non-negative")
    omega = 2.0 * math.pi * profile.frequency
    period = profile.period
    t_up = profile.ramp_up_cycles * period
    t_stable_end = t_up + profile.stable_cycles * period
    t_end = t_stable_end + profile.ramp_down_cycles * period

    env = np.full_like(t_arr, profile.amplitude)
    denv = np.zeros_like(t_arr)
    if t_up > 0:
        rising = t_arr < t_up
        env = np.where(rising, profile.amplitude * t_arr / t_up, env)
        denv = np.where(rising, profile.amplitude / t_up, denv)
    if profile.ramp_down_cycles > 0:
        falling = (t_arr >= t_stable_end) & (t_arr < t_end)
        t_down = profile.ramp_down_cycles * period
        env = np.where(falling, profile.amplitude * (t_end - t_arr) / t_down, env)
        denv = np.where(falling, -profile.amplitude / t_down, denv)
    done = t_arr >= t_end
    env = np.where(done, 0.0, env)
    denv = np.where(done, 0.0, denv)

    phase_term = 1.0 + np.sin(omega * t_arr)
    dz = profile.dz_min + env * phase_term
    dzdot = denv * phase_term + env * omega * np.cos(omega * t_arr)
    if t_arr.ndim == 0:
        return float(dz), float(dzdot)
    return dz, dzdot


def wake_lag(induced_velocity):
    """Default lag model: wake convection time dz / U_i."""
    if induced_velocity <= 0:
        raise DomainError("induced_velocity must be positive")

    def tau(dz):
        return dz / induced_velocity

    return tau


@dataclass
class LoadTimeSeries:
    """Simulated response of the lower vehicle over a dynamic run."""

    t: np.ndarray
    dz: np.ndarray
    dzdot: np.ndarray
    thrust_ratio: np.ndarray
    pitch_ratio: np.ndarray
    phase: np.ndarray
    extrapolated_fraction: float = 0.0


def simulate_loads(grid: LoadGrid, profile: DynamicProfile, arm_length,
                   induced_velocity=None, tau_fn=None):
    """Integrate the lagged load response over the full cycle sequence.

    The quasi-static target comes from the static load map at the scheduled
    separation, scaled by the encounter-velocity factor; the response relaxes
    toward it with time constant tau_fn(dz) (default dz / U_i) using the
    exact exponential step for a piecewise-linear target. Requires
    sample_rate >= 50 f. Queries below the grid's closest measured
    separation are extrapolated and counted in extrapolated_fraction.
    """
    if profile.sample_rate < 50.0 * profile.frequency:
        raise AliasingError(
            f"sample_rate {profile.sample_rate:g} Hz is below 50 x frequency; "
            f"use at least {50.0 * profile.frequency:g} Hz",
            suggested_rate=50.0 * profile.frequency,
        )
    if tau_fn is None:
        if induced_velocity is None:
            raise DomainError("provide induced_velocity for the default wake lag")
        tau_fn = wake_lag(induced_velocity)
    if arm_length <= 0:
        raise DomainError("arm_length must be positive")

    dt = 1.0 / profile.sample_rate
    duration = profile.total_cycles * profile.period
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    dz, dzdot = separation_trajectory(profile, t)
    omega = 2.0 * math.pi * profile.frequency
    phase = np.mod(omega * t, 2.0 * math.pi)

    dz_l = dz / arm_length
    thrust_qs, _, pitch_qs, _, _ = _interp_surfaces(
        grid, "lower", np.full(n, profile.dx_over_l), dz_l)
    tau = np.asarray([max(float(tau_fn(float(d))), 0.0) for d in dz])

    # Encounter-velocity modulation, tied to the same lag model: u_wake is
    # the convection speed implied by tau, so tau -> 0 turns both off.
    factor = np.ones(n)
    lagged = tau > 0
    u_wake = np.divide(dz, tau, out=np.full(n, np.inf), where=lagged)
    factor[lagged] = np.maximum(0.0, 1.0 - dzdot[lagged] / u_wake[lagged]) ** 2
    thrust_tgt = 1.0 - (1.0 - thrust_qs) * factor
    pitch_tgt = pitch_qs * factor

    thrust = _relax(thrust_tgt, tau, dt)
    pitch = _relax(pitch_tgt, tau, dt)

    extrapolated = float(np.mean(dz_l < grid.dz_axis[0]))
    return LoadTimeSeries(
        t=t, dz=dz, dzdot=dzdot, thrust_ratio=thrust, pitch_ratio=pitch,
        phase=phase, extrapolated_fraction=extrapolated,
    )


def _relax(target, tau, dt):
    """First-order relaxation with the exact solution for a target that is
    linear over each step; zero tau pins the response to the target."""
    n = target.size
    out = np.empty(n)
    out[0] = target[0]
    decay = np.exp(-dt / np.where(tau > 0, tau, np.inf))
    slope = np.empty(n)
    slope[1:] = (target[1:] - target[:-1]) / dt
    slope[0] = 0.0
    y = float(target[0])
    tgt = target.tolist()
    dec = decay.tolist()
    slp = slope.tolist()
    tau_l = tau.tolist()
    for k in range(1, n):
        if tau_l[k] <= 0.0:
            y = tgt[k]
        else:
            mt = slp[k] * tau_l[k]
            y = tgt[k] - mt + (y - tgt[k - 1] + mt) * dec[k]
        out[k] = y
    return out


@dataclass
class HysteresisLoop:
    """Phase-averaged loads over the stable cycles.

    loop_area is the signed area of the (dz, thrust) polyline, positive when
    the retreat branch carries more thrust than the approach branch.
    approach_retreat_asymmetry is mean retreat thrust minus mean approach
    thrust.
    """

    phase_bin_centers: np.ndarray
    dz: np.ndarray
    dzdot: np.ndarray
    thrust_ratio: np.ndarray
    pitch_ratio: np.ndarray
    thrust_std: np.ndarray
    pitch_std: np.ndarray
    counts: np.ndarray
    loop_area: float
    approach_retreat_asymmetry: float
    pitch_loop_area: float = 0.0


def phase_average(series: LoadTimeSeries, profile: DynamicProfile, bins=72):
    """Phase-average the stable cycles of a run into a hysteresis loop.

    Ramp cycles are stripped; samples are assigned to equal phase bins over
    [0, 2 pi). An empty bin raises a binning error suggesting fewer bins.
    """
    if bins < 8:
        raise DomainError("need at least 8 phase bins")
    t_start, t_end = profile.stable_window()
    keep = (series.t >= t_start - 1e-12) & (series.t < t_end - 1e-12)
    if not np.any(keep):
        raise DomainError("series contains no stable-cycle samples")
    phase = series.phase[keep]
    idx = np.minimum((phase / (2.0 * math.pi) * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    if np.any(counts == 0):
        raise BinningError(
            f"{int((counts == 0).sum())} of {bins} phase bins are empty; use fewer bins"
        )

    def bin_mean(values):
        return np.bincount(idx, weights=values[keep], minlength=bins) / counts

    def bin_std(values, mean):
        sq = np.bincount(idx, weights=values[keep] ** 2, minlength=bins) / counts
        return np.sqrt(np.maximum(sq - mean**2, 0.0))

    dz_m = bin_mean(series.dz)
    dzdot_m = bin_mean(series.dzdot)
    thrust_m = bin_mean(series.thrust_ratio)
    pitch_m = bin_mean(series.pitch_ratio)
    thrust_s = bin_std(series.thrust_ratio, thrust_m)
    pitch_s = bin_std(series.pitch_ratio, pitch_m)

    retreat = dzdot_m > 0
    approach = dzdot_m < 0
    asym = float(thrust_m[retreat].mean() - thrust_m[approach].mean()) \
        if retreat.any() and approach.any() else 0.0
    centers = (np.arange(bins) + 0.5) * (2.0 * math.pi / bins)
    return HysteresisLoop(
        phase_bin_centers=centers,
        dz=dz_m, dzdot=dzdot_m, thrust_ratio=thrust_m, pitch_ratio=pitch_m,
        thrust_std=thrust_s, pitch_std=pitch_s, counts=counts,
        loop_area=_signed_loop_area(dz_m, thrust_m),
        pitch_loop_area=_signed_loop_area(dz_m, pitch_m),
        approach_retreat_asymmetry=asym,
    )


def _signed_loop_area(x, y):
    """Signed area of the closed phase-ordered polyline, positive for the
    retreat-above-approach orientation."""
    shoelace = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    return -shoelace


def loop_metrics(loop: HysteresisLoop):
    """Summary metrics of a phase-averaged loop."""
    return {
        "loop_area": float(loop.loop_area),
        "pitch_loop_area": float(loop.pitch_loop_area),
        "approach_retreat_asymmetry": float(loop.approach_retreat_asymmetry),
        "thrust_min": float(loop.thrust_ratio.min()),
        "thrust_max": float(loop.thrust_ratio.max()),
        "pitch_range": float(loop.pitch_ratio.max() - loop.pitch_ratio.min()),
        "dz_min": float(loop.dz.min()),
        "dz_max": float(loop.dz.max()),
        "max_abs_dzdot": float(np.max(np.abs(loop.dzdot))),
    }
