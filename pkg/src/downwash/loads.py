"""Measured force/moment interaction surfaces over vehicle separation, their
interpolation, influence envelopes, and a physics-based deficit cross-check.

Separations are normalized by arm length; thrust by weight; pitch moment by
weight times arm length. Grid arrays are indexed [i_dz, i_dx].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .errors import (
    DataError,
    DegenerateEnvelopeError,
    DomainError,
    RangeError,
    ValidityError,
)
from .jet import JetScaling, VehicleGeometry, _length_scales

VEHICLES = ("upper", "lower")


@dataclass
class VehicleLoads:
    """Mean and fluctuation surfaces for one vehicle of the pair."""

    mean_thrust: np.ndarray
    thrust_std: np.ndarray
    mean_pitch: np.ndarray
    pitch_std: np.ndarray

    def __post_init__(self):
        self.mean_thrust = np.asarray(self.mean_thrust, dtype=float)
        self.thrust_std = np.asarray(self.thrust_std, dtype=float)
        self.mean_pitch = np.asarray(self.mean_pitch, dtype=float)
        self.pitch_std = np.asarray(self.pitch_std, dtype=float)

    def surface(self, name):
        return getattr(self, name)


@dataclass
class LoadGrid:
    """Interaction load surfaces for the upper and lower vehicle."""

    dx_axis: np.ndarray
    dz_axis: np.ndarray
    upper: VehicleLoads
    lower: VehicleLoads
    trial_count: int = 3
    sampling_rate_hz: float = 20000.0
    duration_s: float = 30.0

    def __post_init__(self):
        self.dx_axis = np.asarray(self.dx_axis, dtype=float)
        self.dz_axis = np.asarray(self.dz_axis, dtype=float)
        for name, axis in (("dx_axis", self.dx_axis), ("dz_axis", self.dz_axis)):
            if axis.ndim != 1 or axis.size < 2:
                raise DataError(f"{name} must be a 1-D array with at least 2 nodes")
            if not np.all(np.diff(axis) > 0):
                raise DataError(f"{name} must be strictly increasing")
        shape = (self.dz_axis.size, self.dx_axis.size)
        for vname in VEHICLES:
            v = getattr(self, vname)
            for sname in ("mean_thrust", "thrust_std", "mean_pitch", "pitch_std"):
                arr = v.surface(sname)
                if arr.shape != shape:
                    raise DataError(f"{vname}.{sname} must have shape {shape}")
            if np.any(v.mean_thrust <= 0) or np.any(v.mean_thrust > 1.2):
                raise DataError(f"{vname} thrust ratios must lie in (0, 1.2]")
            if np.any(v.thrust_std < 0) or np.any(v.pitch_std < 0):
                raise DataError(f"{vname} std surfaces must be non-negative")

    def vehicle(self, name) -> VehicleLoads:
        if name not in VEHICLES:
            raise DomainError(f"vehicle must be one of {VEHICLES}")
        return getattr(self, name)


@dataclass
class LoadSample:
    """One interpolated or measured query of the load surfaces."""

    thrust_ratio: float
    thrust_std: float
    pitch_ratio: float
    pitch_std: float
    vehicle: str
    separation: tuple
    provenance: str  # measured-node | interpolated | asymptotic


@dataclass
class InteractionEnvelope:
    """Thresholded influence region on one load surface.

    boundary is an (N, 2) polyline of (dx, dz) points; the fitted ellipse is
    axially aligned and centered at the upper vehicle (dx = 0, dz = 0).
    """

    threshold: float
    surface: str
    vehicle: str
    boundary: np.ndarray
    a_lateral: float
    b_axial: float
    lateral_extent: float
    axial_extent: float

    def __post_init__(self):
        if self.b_axial <= self.a_lateral:
            raise ValidityError(
                "envelope is not axially elongated (b_axial <= a_lateral)"
            )


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _bilinear(axis_x, axis_z, surface, xq, zq):
    """Bilinear interpolation at clamped query points (arrays)."""
    ix = np.clip(np.searchsorted(axis_x, xq, side="right") - 1, 0, axis_x.size - 2)
    iz = np.clip(np.searchsorted(axis_z, zq, side="right") - 1, 0, axis_z.size - 2)
    tx = np.clip((xq - axis_x[ix]) / (axis_x[ix + 1] - axis_x[ix]), 0.0, 1.0)
    tz = np.clip((zq - axis_z[iz]) / (axis_z[iz + 1] - axis_z[iz]), 0.0, 1.0)
    v00 = surface[iz, ix]
    v01 = surface[iz, ix + 1]
    v10 = surface[iz + 1, ix]
    v11 = surface[iz + 1, ix + 1]
    return (1 - tz) * ((1 - tx) * v00 + tx * v01) + tz * ((1 - tx) * v10 + tx * v11)


def _interp_surfaces(grid: LoadGrid, vehicle, dxq, dzq):
    """Vectorized query of all four surfaces with the asymptotic blend.

    Returns (thrust, thrust_std, pitch, pitch_std, blend) where blend is the
    asymptote weight in [0, 1]; blend == 1 means exactly (1, 0, 0, 0).
    Negative dx mirrors: even surfaces reflected, pitch sign flipped.
    """
    loads = grid.vehicle(vehicle)
    dxq = np.asarray(dxq, dtype=float)
    dzq = np.asarray(dzq, dtype=float)
    pitch_sign = np.where(dxq < 0, -1.0, 1.0)
    dxq = np.abs(dxq)

    ax, az = grid.dx_axis, grid.dz_axis
    xc = np.clip(dxq, ax[0], ax[-1])
    zc = np.clip(dzq, az[0], az[-1])
    thrust = _bilinear(ax, az, loads.mean_thrust, xc, zc)
    t_std = _bilinear(ax, az, loads.thrust_std, xc, zc)
    pitch = _bilinear(ax, az, loads.mean_pitch, xc, zc)
    p_std = _bilinear(ax, az, loads.pitch_std, xc, zc)

    cw_x_lo, cw_x_hi = ax[1] - ax[0], ax[-1] - ax[-2]
    cw_z_lo, cw_z_hi = az[1] - az[0], az[-1] - az[-2]
    out_x = np.maximum((ax[0] - dxq) / cw_x_lo, (dxq - ax[-1]) / cw_x_hi)
    out_z = np.maximum((az[0] - dzq) / cw_z_lo, (dzq - az[-1]) / cw_z_hi)
    s = np.hypot(np.maximum(out_x, 0.0), np.maximum(out_z, 0.0))
    blend = _smoothstep(s)
    beyond = s >= 1.0
    thrust = np.where(beyond, 1.0, thrust + blend * (1.0 - thrust))
    t_std = np.where(beyond, 0.0, (1.0 - blend) * t_std)
    pitch = np.where(beyond, 0.0, (1.0 - blend) * pitch) * pitch_sign
    p_std = np.where(beyond, 0.0, (1.0 - blend) * p_std)
    return thrust, t_std, pitch, p_std, np.where(beyond, 1.0, blend)


def query_loads(grid: LoadGrid, vehicle, dx_over_l, dz_over_l) -> LoadSample:
    """Interpolated load sample at a separation.

    Inside the measured rectangle: bilinear interpolation (bit-exact at grid
    nodes). Outside: smooth blend to the asymptote (1, 0, 0, 0) over one
    edge-cell width; beyond the blend band the asymptote is exact.
    """
    dx = float(dx_over_l)
    dz = float(dz_over_l)
    thrust, t_std, pitch, p_std, blend = (
        float(a) for a in _interp_surfaces(grid, vehicle, dx, dz)
    )
    if blend >= 1.0:
        provenance = "asymptotic"
    elif abs(dx) in grid.dx_axis and dz in grid.dz_axis and blend == 0.0:
        provenance = "measured-node"
    else:
        provenance = "interpolated"
    return LoadSample(
        thrust_ratio=thrust, thrust_std=t_std, pitch_ratio=pitch, pitch_std=p_std,
        vehicle=vehicle, separation=(dx, dz), provenance=provenance,
    )


def _fit_axial_ellipse(points, rect):
    """Axially-aligned ellipse through the boundary, centered at the origin.

    Least squares on p x^2 + q z^2 = 1 over points strictly inside the
    measured rectangle (cut artifacts on the rectangle edges are excluded),
    anchored by falling back to the two contour extremes when the normal
    equations go non-positive.
    """
    (x0, x1), (z0, z1) = rect
    tol_x = 1e-9 * max(1.0, abs(x1))
    tol_z = 1e-9 * max(1.0, abs(z1))
    inner = points[
        (points[:, 0] > x0 + tol_x) & (points[:, 0] < x1 - tol_x)
        & (points[:, 1] > z0 + tol_z) & (points[:, 1] < z1 - tol_z)
    ]
    def anchored():
        i_x = int(np.argmax(np.abs(points[:, 0])))
        i_z = int(np.argmax(points[:, 1]))
        a_mat = np.array([
            [points[i_x, 0] ** 2, points[i_x, 1] ** 2],
            [points[i_z, 0] ** 2, points[i_z, 1] ** 2],
        ])
        try:
            return np.linalg.solve(a_mat, np.ones(2))
        except np.linalg.LinAlgError:
            return np.array([-1.0, -1.0])

    if inner.shape[0] >= 4:
        x2 = inner[:, 0] ** 2
        z2 = inner[:, 1] ** 2
        a_mat = np.array([[np.sum(x2 * x2), np.sum(x2 * z2)],
                          [np.sum(x2 * z2), np.sum(z2 * z2)]])
        rhs = np.array([np.sum(x2), np.sum(z2)])
        try:
            pq = np.linalg.solve(a_mat, rhs)
        except np.linalg.LinAlgError:
            pq = anchored()
    else:
        pq = anchored()
    if np.any(pq <= 0):
        pq = anchored()
    if np.any(pq <= 0):
        raise DegenerateEnvelopeError("boundary does not define an axially-aligned ellipse")
    return 1.0 / np.sqrt(pq[0]), 1.0 / np.sqrt(pq[1])


def _envelope(grid: LoadGrid, vehicle, surface, threshold, refine=8):
    loads = grid.vehicle(vehicle)
    values = loads.surface(surface)
    if not values.min() <= threshold <= values.max():
        raise DegenerateEnvelopeError(
            f"threshold {threshold:g} never crossed on {vehicle} {surface} "
            f"(range [{values.min():g}, {values.max():g}])"
        )
    ax, az = grid.dx_axis, grid.dz_axis
    nx = refine * (ax.size - 1) + 1
    nz = refine * (az.size - 1) + 1
    fx = np.linspace(ax[0], ax[-1], nx)
    fz = np.linspace(az[0], az[-1], nz)
    gx, gz = np.meshgrid(fx, fz)
    fine = _bilinear(ax, az, values, gx.ravel(), gz.ravel()).reshape(gz.shape)
    contours = measure.find_contours(fine, threshold)
    if not contours:
        raise DegenerateEnvelopeError(
            f"threshold {threshold:g} produced no contour on the interpolated surface"
        )

    def to_xy(c):
        iz, ix = c[:, 0], c[:, 1]
        return np.column_stack([
            fx[0] + ix * (fx[-1] - fx[0]) / (nx - 1),
            fz[0] + iz * (fz[-1] - fz[0]) / (nz - 1),
        ])

    def arc_length(p):
        return float(np.sum(np.hypot(np.diff(p[:, 0]), np.diff(p[:, 1]))))

    boundary = max((to_xy(c) for c in contours), key=arc_length)
    a_lat, b_ax = _fit_axial_ellipse(boundary, ((ax[0], ax[-1]), (az[0], az[-1])))
    return InteractionEnvelope(
        threshold=float(threshold), surface=surface, vehicle=vehicle,
        boundary=boundary,
        a_lateral=float(a_lat), b_axial=float(b_ax),
        lateral_extent=float(np.max(np.abs(boundary[:, 0]))),
        axial_extent=float(np.max(boundary[:, 1])),
    )


def influence_envelope(grid: LoadGrid, vehicle="lower", threshold=0.98, refine=8):
    """Boundary of the downwash influence region on the mean-thrust surface."""
    if not 0.5 < threshold < 1.0:
        raise DomainError("thrust threshold must lie in (0.5, 1)")
    return _envelope(grid, vehicle, "mean_thrust", threshold, refine=refine)


def unsteadiness_envelope(grid: LoadGrid, vehicle="lower", std_threshold=0.005, refine=8):
    """Boundary of the region where thrust unsteadiness exceeds the threshold."""
    if std_threshold <= 0:
        raise DomainError("std_threshold must be positive")
    return _envelope(grid, vehicle, "thrust_std", std_threshold, refine=refine)


def peak_pitch_offset(grid: LoadGrid, vehicle="lower"):
    """Per-row lateral offset of the strongest pitch moment.

    Returns (dz_axis, dx_at_peak) with ties broken toward the smaller dx.
    The grid must span dx/l = 2.
    """
    if grid.dx_axis[-1] < 2.0:
        raise RangeError("grid does not span dx/l = 2")
    pitch = np.abs(grid.vehicle(vehicle).mean_pitch)
    idx = np.argmax(pitch, axis=1)  # first occurrence = smallest dx on ties
    return grid.dz_axis.copy(), grid.dx_axis[idx]


def incident_flux(scaling: JetScaling, geom: VehicleGeometry, dx_over_l, dz_over_l,
                  samples=257):
    """Integral of the squared model axial velocity across the lower
    vehicle's rotor span at the queried separation (far field only)."""
    if dz_over_l <= scaling.merge_point:
        raise ValidityError("incident flux is defined only past the merge point")
    arm, rotor = _length_scales(geom, scaling)
    half_span = arm + rotor
    x = np.linspace(dx_over_l * arm - half_span, dx_over_l * arm + half_span, samples)
    u = scaling.axial_profile(x, dz_over_l * arm if scaling.length_unit == "meters" else dz_over_l)
    return float(np.trapezoid(u**2, x))


def calibrate_momentum_deficit(scaling: JetScaling, geom: VehicleGeometry,
                               grid: LoadGrid, vehicle="lower", min_deficit=0.02):
    """Single-anchor calibration constant for the deficit estimate.

    The anchor is the first stacked (dx = 0) far-field node whose measured
    deficit is informative (>= min_deficit).
    """
    ix = int(np.argmin(np.abs(grid.dx_axis)))
    loads = grid.vehicle(vehicle)
    for iz, dz in enumerate(grid.dz_axis):
        deficit = 1.0 - loads.mean_thrust[iz, ix]
        if dz > scaling.merge_point and deficit >= min_deficit:
            flux = incident_flux(scaling, geom, float(grid.dx_axis[ix]), float(dz))
            return deficit / flux, (float(grid.dx_axis[ix]), float(dz))
    raise ValidityError("no informative far-field anchor node found for calibration")


def momentum_deficit_estimate(scaling: JetScaling, geom: VehicleGeometry,
                              dx_over_l, dz_over_l, calibration):
    """Predicted thrust ratio from the incident dynamic-pressure loading.

    calibration is the constant returned by calibrate_momentum_deficit.
    """
    k = calibration[0] if isinstance(calibration, tuple) else float(calibration)
    return 1.0 - k * incident_flux(scaling, geom, float(dx_over_l), float(dz_over_l))
