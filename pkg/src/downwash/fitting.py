"""Recovery of the far-field scaling parameters from measured half-width
growth and centerline decay series.

Both laws are exactly linear in suitable coordinates, so the fits are
closed-form least squares; the joint fit shares one virtual origin by a
golden-section search over the profiled objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import DomainError, FitError
from .jet import JetScaling

#: Variance floor (squared length units) for the automatic inter-series
#: weighting; keeps exact series from collapsing the joint objective.
_VARIANCE_FLOOR = 1e-24


def _as_weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.size != n:
        raise DomainError("weights length does not match the series")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    return w


@dataclass(frozen=True)
class GrowthSeries:
    """Measured jet half-widths against downstream station."""

    z: np.ndarray
    r_half: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "r_half", np.asarray(self.r_half, dtype=float))
        if self.z.size != self.r_half.size or self.z.size < 3:
            raise DomainError("growth series needs equal-length arrays of at least 3 points")
        if np.any(self.r_half <= 0):
            raise DomainError("half-widths must be positive")
        object.__setattr__(self, "weights",
                           None if self.weights is None else _as_weights(self.weights, self.z.size))


@dataclass(frozen=True)
class DecaySeries:
    """Measured centerline velocities against downstream station."""

    z: np.ndarray
    u_c: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "u_c", np.asarray(self.u_c, dtype=float))
        if self.z.size != self.u_c.size or self.z.size < 3:
            raise DomainError("decay series needs equal-length arrays of at least 3 points")
        if np.any(self.u_c <= 0):
            raise DomainError("centerline velocities must be positive")
        if not np.all(np.diff(self.z) > 0):
            raise DomainError("decay series z must be strictly increasing")
        object.__setattr__(self, "weights",
                           None if self.weights is None else _as_weights(self.weights, self.z.size))


@dataclass
class FitResult:
    """Outcome of a scaling-parameter fit."""

    scaling: JetScaling
    residual_rms: dict
    fit_range: tuple
    covariance: dict | None = None
    fallback_used: bool = False
    notes: list = dataclass_field(default_factory=list)


def _weighted_line(x, y, w):
    """Weighted least squares y = m x + b. Returns m, b, rms residual."""
    sw = w.sum()
    if sw <= 0:
        raise FitError("all weights are zero")
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    if sxx <= 0:
        raise FitError("regressor has no spread; fit is rank deficient")
    m = (w * (x - xm) * (y - ym)).sum() / sxx
    b = ym - m * xm
    resid = y - (m * x + b)
    rms = float(np.sqrt((w * resid**2).sum() / sw))
    return float(m), float(b), rms


def fit_half_width_growth(series: GrowthSeries):
    """Fit r_half = S (z - z0) by ordinary least squares.

    Returns (S, z0, rms residual in half-width units).
    """
    w = _as_weights(series.weights, series.z.size)
    slope, intercept, rms = _weighted_line(series.z, series.r_half, w)
    if slope == 0:
        raise FitError("fitted spread rate is zero")
    return slope, -intercept / slope, rms


def fit_centerline_decay(series: DecaySeries, u0=1.0):
    """Fit u_c = u0 Bd / (z - z0) through its linear form.

    1/u_c is linear in z with noise confined to the velocity measurement,
    so the regression runs 1/u_c on z. Returns (Bd, z0, rms residual
    expressed in z units).
    """
    if u0 <= 0:
        raise DomainError("u0 must be positive")
    w = _as_weights(series.weights, series.z.size)
    y = 1.0 / series.u_c
    m, b, rms_y = _weighted_line(series.z, y, w)
    if m == 0:
        raise FitError("fitted decay slope is zero")
    bd = 1.0 / (u0 * m)
    z0 = -b / m
    return bd, z0, rms_y / abs(m)


def _profiled_objective(z0, growth, decay, wg, wd, weight_g, weight_d):
    """Joint weighted squared residual with the inner linear problems solved.

    Both contributions are expressed in squared length units so the
    inter-series weights are comparable.
    """
    tg = growth.z - z0
    den_g = (wg * tg**2).sum()
    if den_g <= 0:
        return np.inf, None, None
    slope = (wg * growth.r_half * tg).sum() / den_g
    jg = (wg * (growth.r_half - slope * tg) ** 2).sum() / slope**2 if slope != 0 else np.inf

    y = 1.0 / decay.u_c
    td = decay.z - z0
    den_d = (wd * td**2).sum()
    if den_d <= 0:
        return np.inf, None, None
    m = (wd * y * td).sum() / den_d
    if m == 0:
        return np.inf, None, None
    jd = (wd * (td - y / m) ** 2).sum()
    return weight_g * jg + weight_d * jd, slope, m


def _golden_minimize(f, lo, hi, tol=1e-13, max_iter=400):
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
        if b - a < tol * max(1.0, abs(a), abs(b)):
            break
    return 0.5 * (a + b)


def joint_fit(growth: GrowthSeries, decay: DecaySeries, u0=1.0,
              merge_point=6.5, length_unit="arm_lengths",
              velocity_unit="induced_velocity", series_weights=None):
    """Fit (S, Bd) with a single shared virtual origin z0.

    The inner problems are linear given z0, so z0 is found by golden-section
    search on the profiled objective, bracketed by the two independent fits.
    Unless series_weights=(w_growth, w_decay) is given, the series are
    weighted by the inverse residual variance of their independent fits
    (both residuals expressed in length units). If the bracket degenerates
    the independent estimates are averaged and the result is flagged.
    """
    s_ind, z0_g, rms_g = fit_half_width_growth(growth)
    bd_ind, z0_d, rms_d = fit_centerline_decay(decay, u0=u0)
    wg = _as_weights(growth.weights, growth.z.size)
    wd = _as_weights(decay.weights, decay.z.size)
    if series_weights is None:
        weight_g = 1.0 / max(rms_g**2 / max(s_ind**2, 1e-30), _VARIANCE_FLOOR)
        weight_d = 1.0 / max(rms_d**2, _VARIANCE_FLOOR)
    else:
        weight_g, weight_d = series_weights
        if weight_g < 0 or weight_d < 0:
            raise DomainError("series weights must be non-negative")

    notes = []
    fallback = False
    span = abs(z0_g - z0_d)
    if span < 1e-12 * max(1.0, abs(z0_g)):
        z0 = 0.5 * (z0_g + z0_d)
    else:
        lo, hi = min(z0_g, z0_d) - 0.5 * span, max(z0_g, z0_d) + 0.5 * span
        hi = min(hi, min(growth.z.min(), decay.z.min()) - 1e-9)

        def objective(z0):
            val, _, _ = _profiled_objective(z0, growth, decay, wg, wd, weight_g, weight_d)
            return val

        if not np.isfinite(objective(lo)) or not np.isfinite(objective(hi)) or lo >= hi:
            fallback = True
            z0 = 0.5 * (z0_g + z0_d)
            notes.append("bracket failure; averaged the independent virtual origins")
        else:
            z0 = _golden_minimize(objective, lo, hi)

    _, slope, m = _profiled_objective(z0, growth, decay, wg, wd, weight_g, weight_d)
    if slope is None or m is None or slope <= 0 or m <= 0:
        raise FitError("joint fit produced a non-physical scaling")
    scaling = JetScaling(
        spread_rate=slope,
        decay_product=1.0 / (u0 * m),
        virtual_origin=z0,
        merge_point=merge_point,
        initial_jet_velocity=u0,
        length_unit=length_unit,
        velocity_unit=velocity_unit,
    )
    tg = growth.z - z0
    resid_g = float(np.sqrt((wg * (growth.r_half - slope * tg) ** 2).sum() / wg.sum()))
    td = decay.z - z0
    resid_d = float(np.sqrt((wd * (td - (1.0 / decay.u_c) / m) ** 2).sum() / wd.sum()))
    return FitResult(
        scaling=scaling,
        residual_rms={"growth": resid_g, "decay": resid_d},
        fit_range=(float(min(growth.z.min(), decay.z.min())),
                   float(max(growth.z.max(), decay.z.max()))),
        covariance=None,
        fallback_used=fallback,
        notes=notes,
    )
