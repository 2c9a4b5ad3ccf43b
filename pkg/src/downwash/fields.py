"""Processing of gridded mean-velocity data: averaging, stitching, profile
extraction, merge-point detection, half-width measurement and self-similarity
collapse diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import DataError, NotMergedError, RangeError, StitchError, ValidityError
from .jet import JetScaling, axial_shape, lateral_shape

#: Profiles with more than this fraction of masked nodes are rejected.
MAX_MASKED_FRACTION = 0.20


@dataclass(eq=False)
class VelocityField:
    """Gridded 2-D mean flow: u is axial (positive toward the ground), v lateral.

    Arrays are indexed [iz, ix]. Nodes flagged invalid are excluded from
    averages; their u/v entries are stored as zero.
    """

    x_axis: np.ndarray
    z_axis: np.ndarray
    u: np.ndarray
    v: np.ndarray
    frame_count: int = 1
    length_unit: str = "arm_lengths"
    velocity_unit: str = "induced_velocity"
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.x_axis = np.asarray(self.x_axis, dtype=float)
        self.z_axis = np.asarray(self.z_axis, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        for name, axis in (("x_axis", self.x_axis), ("z_axis", self.z_axis)):
            if axis.ndim != 1 or axis.size == 0:
                raise DataError(f"{name} must be a non-empty 1-D array")
            if axis.size > 1 and not np.all(np.diff(axis) > 0):
                raise DataError(f"{name} must be strictly increasing")
        shape = (self.z_axis.size, self.x_axis.size)
        if self.u.shape != shape or self.v.shape != shape:
            raise DataError(f"u and v must have shape {shape}")
        if self.frame_count < 1:
            raise DataError("frame_count must be at least 1")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != shape:
                raise DataError(f"valid mask must have shape {shape}")
            self.u = np.where(self.valid, self.u, 0.0)
            self.v = np.where(self.valid, self.v, 0.0)
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise DataError("velocity arrays contain non-finite entries outside the mask")

    def __eq__(self, other):
        if not isinstance(other, VelocityField):
            return NotImplemented
        same_mask = (
            (self.valid is None and other.valid is None)
            or (self.valid is not None and other.valid is not None
                and np.array_equal(self.valid, other.valid))
        )
        return (
            same_mask
            and self.frame_count == other.frame_count
            and self.length_unit == other.length_unit
            and self.velocity_unit == other.velocity_unit
            and np.array_equal(self.x_axis, other.x_axis)
            and np.array_equal(self.z_axis, other.z_axis)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )

    def valid_mask(self):
        if self.valid is None:
            return np.ones((self.z_axis.size, self.x_axis.size), dtype=bool)
        return self.valid

    def copy(self):
        return VelocityField(
            x_axis=self.x_axis.copy(), z_axis=self.z_axis.copy(),
            u=self.u.copy(), v=self.v.copy(), frame_count=self.frame_count,
            length_unit=self.length_unit, velocity_unit=self.velocity_unit,
            valid=None if self.valid is None else self.valid.copy(),
        )


@dataclass
class VelocityProfile:
    """One downstream slice of the flow field."""

    z_location: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (self.x.size == self.u.size == self.v.size):
            raise DataError("profile arrays must have equal lengths")
        if self.x.size > 1 and not np.all(np.diff(self.x) > 0):
            raise DataError("profile x must be strictly increasing")


@dataclass
class ScaledProfile:
    """A profile rescaled to similarity coordinates (xi, u/u_c, v/u_c)."""

    z_location: float
    xi: np.ndarray
    u_over_uc: np.ndarray
    v_over_uc: np.ndarray


@dataclass
class CollapseReport:
    """Self-similarity collapse diagnostics over a set of far-field stations.

    rms residuals are in velocity units; relative residuals are the L2 norm
    of the deviation over the L2 norm of the reference curve.
    """

    stations: list
    rms_residual_axial: float
    rms_residual_lateral: float
    relative_residual_axial: float
    relative_residual_lateral: float
    scaled_profiles: list = dataclass_field(default_factory=list)
    per_station: list = dataclass_field(default_factory=list)


def _check_compatible(a: VelocityField, b: VelocityField, what):
    if not np.array_equal(a.x_axis, b.x_axis):
        raise DataError(f"{what}: x axes differ")
    if a.length_unit != b.length_unit or a.velocity_unit != b.velocity_unit:
        raise DataError(f"{what}: unit conventions differ")


def time_average(frames):
    """Node-wise mean of several fields on identical grids.

    Masked nodes are excluded; a node invalid in every frame stays masked.
    frame_count of the result is the sum of the inputs'.
    """
    frames = list(frames)
    if not frames:
        raise DataError("time_average needs at least one frame")
    first = frames[0]
    for f in frames[1:]:
        _check_compatible(first, f, "time_average")
        if not np.array_equal(first.z_axis, f.z_axis):
            raise DataError("time_average: z axes differ")
    shape = (first.z_axis.size, first.x_axis.size)
    u_sum = np.zeros(shape)
    v_sum = np.zeros(shape)
    count = np.zeros(shape)
    for f in frames:
        m = f.valid_mask()
        u_sum += np.where(m, f.u, 0.0)
        v_sum += np.where(m, f.v, 0.0)
        count += m
    present = count > 0
    u_mean = np.divide(u_sum, count, out=np.zeros(shape), where=present)
    v_mean = np.divide(v_sum, count, out=np.zeros(shape), where=present)
    all_valid = bool(present.all()) and all(f.valid is None for f in frames)
    return VelocityField(
        x_axis=first.x_axis.copy(), z_axis=first.z_axis.copy(),
        u=u_mean, v=v_mean,
        frame_count=sum(f.frame_count for f in frames),
        length_unit=first.length_unit, velocity_unit=first.velocity_unit,
        valid=None if all_valid else present,
    )


def _stitch_pair(a, b, blend, min_overlap_fraction, pair):
    _check_compatible(a, b, "stitch")
    if b.z_axis[0] <= a.z_axis[0] or b.z_axis[-1] <= a.z_axis[-1]:
        raise StitchError(f"sections {pair} are not ordered downstream", pair=pair)
    height_a = a.z_axis[-1] - a.z_axis[0]
    height_b = b.z_axis[-1] - b.z_axis[0]
    overlap = a.z_axis[-1] - b.z_axis[0]
    required = min_overlap_fraction * min(height_a, height_b)
    if overlap < required - 1e-12:
        raise StitchError(
            f"sections {pair} overlap by {overlap:g}, need at least {required:g}",
            pair=pair,
        )
    tol = 1e-9 * max(1.0, abs(float(a.z_axis[-1])))
    a_over = np.where(a.z_axis >= b.z_axis[0] - tol)[0]
    b_over = np.where(b.z_axis <= a.z_axis[-1] + tol)[0]
    if a_over.size != b_over.size or not np.allclose(
        a.z_axis[a_over], b.z_axis[b_over], rtol=0.0, atol=tol
    ):
        raise StitchError(f"sections {pair}: overlap grids do not line up", pair=pair)

    lo, hi = b.z_axis[0], a.z_axis[-1]
    if blend == "average":
        t = np.full(a_over.size, 0.5)
    elif blend == "linear_ramp":
        t = (a.z_axis[a_over] - lo) / (hi - lo) if hi > lo else np.full(a_over.size, 0.5)
    else:
        raise DataError(f"unknown blend mode {blend!r}")

    ma, mb = a.valid_mask()[a_over], b.valid_mask()[b_over]
    wa = np.where(ma, (1.0 - t)[:, None], 0.0)
    wb = np.where(mb, t[:, None], 0.0)
    wsum = wa + wb
    present = wsum > 0
    # a + t*(b - a) keeps equal sections bit-exact through the overlap
    both = ma & mb
    u_mix = np.where(both, a.u[a_over] + t[:, None] * (b.u[b_over] - a.u[a_over]),
                     np.divide(wa * a.u[a_over] + wb * b.u[b_over], wsum,
                               out=np.zeros_like(wsum), where=present))
    v_mix = np.where(both, a.v[a_over] + t[:, None] * (b.v[b_over] - a.v[a_over]),
                     np.divide(wa * a.v[a_over] + wb * b.v[b_over], wsum,
                               out=np.zeros_like(wsum), where=present))

    a_lower = np.where(a.z_axis < b.z_axis[0] - tol)[0]
    b_upper = np.where(b.z_axis > a.z_axis[-1] + tol)[0]
    z_axis = np.concatenate([a.z_axis[a_lower], a.z_axis[a_over], b.z_axis[b_upper]])
    u = np.concatenate([a.u[a_lower], u_mix, b.u[b_upper]])
    v = np.concatenate([a.v[a_lower], v_mix, b.v[b_upper]])
    valid = np.concatenate([a.valid_mask()[a_lower], present, b.valid_mask()[b_upper]])
    return VelocityField(
        x_axis=a.x_axis.copy(), z_axis=z_axis, u=u, v=v,
        frame_count=min(a.frame_count, b.frame_count),
        length_unit=a.length_unit, velocity_unit=a.velocity_unit,
        valid=None if valid.all() else valid,
    )


def stitch(sections, blend="linear_ramp", min_overlap_fraction=1.0 / 3.0):
    """Combine overlapping sections (ordered downstream) into one composite.

    Overlap nodes are combined by the chosen blend; everything else is
    copied verbatim. Consecutive sections must overlap by at least
    min_overlap_fraction of the shorter section's height.
    """
    sections = list(sections)
    if not sections:
        raise DataError("stitch needs at least one section")
    composite = sections[0].copy()
    for i, nxt in enumerate(sections[1:]):
        composite = _stitch_pair(composite, nxt, blend, min_overlap_fraction, (i, i + 1))
    return composite


def extract_profile(field: VelocityField, z, mode="interpolate"):
    """Slice the field at station z.

    mode 'nearest' returns the closest row verbatim; 'interpolate' (default)
    blends the two bracketing rows linearly. Profiles with more than 20 %
    masked nodes are rejected; remaining masked nodes are filled by linear
    interpolation along x.
    """
    z = float(z)
    zs = field.z_axis
    if z < zs[0] or z > zs[-1]:
        raise RangeError(f"z = {z:g} outside field range [{zs[0]:g}, {zs[-1]:g}]")
    mask = field.valid_mask()
    exact = np.where(zs == z)[0]
    if exact.size:
        i = int(exact[0])
        u, v, m = field.u[i].copy(), field.v[i].copy(), mask[i].copy()
    elif mode == "nearest":
        i = int(np.argmin(np.abs(zs - z)))
        u, v, m = field.u[i].copy(), field.v[i].copy(), mask[i].copy()
    elif mode == "interpolate":
        hi = int(np.searchsorted(zs, z))
        lo = hi - 1
        t = (z - zs[lo]) / (zs[hi] - zs[lo])
        u = (1.0 - t) * field.u[lo] + t * field.u[hi]
        v = (1.0 - t) * field.v[lo] + t * field.v[hi]
        m = mask[lo] & mask[hi]
    else:
        raise DataError(f"unknown extraction mode {mode!r}")
    bad = ~m
    if bad.mean() > MAX_MASKED_FRACTION:
        raise ValidityError(
            f"profile at z = {z:g} has {bad.mean():.0%} masked nodes (limit 20%)"
        )
    if bad.any():
        u[bad] = np.interp(field.x_axis[bad], field.x_axis[m], u[m])
        v[bad] = np.interp(field.x_axis[bad], field.x_axis[m], v[m])
    return VelocityProfile(z_location=z, x=field.x_axis.copy(), u=u, v=v)


def centerline_and_max(profile: VelocityProfile):
    """(u_c, u_max, x_at_max): centerline value, profile maximum and its location.

    Ties in the maximum break toward the smallest |x|.
    """
    x, u = profile.x, profile.u
    if x[0] > 0 or x[-1] < 0:
        raise RangeError("profile does not span the centerline x = 0")
    u_c = float(np.interp(0.0, x, u))
    u_max = float(u.max())
    at_max = np.where(u == u_max)[0]
    x_at_max = float(x[at_max[np.argmin(np.abs(x[at_max]))]])
    return u_c, u_max, x_at_max


def detect_merge_point(field: VelocityField, eps=0.02, window=3):
    """Smallest station where centerline and maximum velocity agree.

    Returns the first z where (u_max - u_c)/u_max < eps holds for `window`
    consecutive stations. Raises NotMergedError (carrying the smallest
    observed gap) if the condition is never met.
    """
    if not 0.0 < eps < 0.2:
        raise ValidityError("eps must lie in (0, 0.2)")
    if window < 1:
        raise ValidityError("window must be at least 1")
    gaps = np.empty(field.z_axis.size)
    for i, z in enumerate(field.z_axis):
        prof = extract_profile(field, z, mode="nearest")
        u_c, u_max, _ = centerline_and_max(prof)
        gaps[i] = (u_max - u_c) / u_max if u_max > 0 else np.inf
    merged = gaps < eps
    run = 0
    for i, ok in enumerate(merged):
        run = run + 1 if ok else 0
        if run >= window:
            return float(field.z_axis[i - window + 1])
    raise NotMergedError(
        f"merge condition (gap < {eps:g} over {window} stations) never met; "
        f"minimum gap {np.nanmin(gaps):.4g}",
        min_gap=float(np.nanmin(gaps)),
    )


def _unimodal_or_raise(x, u, peak_idx, tol):
    peak = u[peak_idx]
    for sl in (slice(peak_idx, None, 1), slice(peak_idx, None, -1)):
        side = u[sl]
        running_min = np.minimum.accumulate(side)
        if np.any(side - running_min > tol * peak):
            raise ValidityError(
                "profile is multimodal; half-width is undefined before the jets merge"
            )


def half_width_from_profile(profile: VelocityProfile, unimodal_tol=0.05):
    """Half-width of a merged (unimodal) profile.

    On each side of the centerline the crossing of half the centerline value
    is located by linear interpolation between the bracketing samples; the
    mean of the two distances is returned. Secondary bumps more prominent
    than unimodal_tol of the peak raise a validity error.
    """
    x, u = profile.x, profile.u
    u_c, u_max, _ = centerline_and_max(profile)
    peak_idx = int(np.where(u == u_max)[0][0])
    _unimodal_or_raise(x, u, peak_idx, unimodal_tol)
    half = 0.5 * u_c

    def crossing(direction):
        idx = peak_idx
        while True:
            nxt = idx + direction
            if nxt < 0 or nxt >= x.size:
                raise RangeError("half-maximum crossing not found within the profile span")
            if u[idx] >= half > u[nxt]:
                t = (u[idx] - half) / (u[idx] - u[nxt])
                return x[idx] + t * (x[nxt] - x[idx])
            idx = nxt

    right = crossing(+1)
    left = crossing(-1)
    return float(0.5 * (abs(right) + abs(left)))


def similarity_collapse(profiles, scaling: JetScaling, xi_max=2.0):
    """Rescale far-field profiles to similarity coordinates and measure how
    well they collapse onto the theoretical curves.

    Residuals are evaluated over |xi| <= xi_max with the model's half-width
    and centerline velocity as the per-station scales.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValidityError("similarity_collapse needs at least one profile")
    for p in profiles:
        if p.z_location <= scaling.merge_point:
            raise ValidityError(
                f"station z = {p.z_location:g} is not past the merge point "
                f"{scaling.merge_point:g}"
            )
    stations = []
    scaled = []
    per_station = []
    dev_ax, ref_ax, dev_lat, ref_lat, n_total = 0.0, 0.0, 0.0, 0.0, 0
    for p in profiles:
        r_half = scaling.half_width(p.z_location)
        u_c = scaling.centerline_velocity(p.z_location)
        xi = p.x / r_half
        keep = np.abs(xi) <= xi_max
        xi_k = xi[keep]
        u_s = p.u[keep] / u_c
        v_s = p.v[keep] / u_c
        g_ax = axial_shape(np.abs(xi_k))
        g_lat = lateral_shape(xi_k)
        d_ax = float(np.sum((u_s - g_ax) ** 2))
        d_lat = float(np.sum((v_s - g_lat) ** 2))
        r_ax = float(np.sum(g_ax**2))
        r_lat = float(np.sum(g_lat**2))
        dev_ax += d_ax * u_c**2
        dev_lat += d_lat * u_c**2
        ref_ax += r_ax
        ref_lat += r_lat
        n_total += xi_k.size
        stations.append(p.z_location)
        scaled.append(ScaledProfile(p.z_location, xi_k, u_s, v_s))
        per_station.append({
            "z": p.z_location,
            "rms_axial": float(u_c * np.sqrt(d_ax / xi_k.size)) if xi_k.size else 0.0,
            "rms_lateral": float(u_c * np.sqrt(d_lat / xi_k.size)) if xi_k.size else 0.0,
            "relative_axial": float(np.sqrt(d_ax / r_ax)) if r_ax else 0.0,
            "relative_lateral": float(np.sqrt(d_lat / r_lat)) if r_lat else 0.0,
        })
    return CollapseReport(
        stations=stations,
        rms_residual_axial=float(np.sqrt(dev_ax / n_total)) if n_total else 0.0,
        rms_residual_lateral=float(np.sqrt(dev_lat / n_total)) if n_total else 0.0,
        relative_residual_axial=float(np.sqrt(
            sum((s["relative_axial"] ** 2) for s in per_station) / len(per_station))),
        relative_residual_lateral=float(np.sqrt(
            sum((s["relative_lateral"] ** 2) for s in per_station) / len(per_station))),
        scaled_profiles=scaled,
        per_station=per_station,
    )


def downwash_speed(field: VelocityField):
    """Node-wise speed sqrt(u^2 + v^2)."""
    return np.hypot(field.u, field.v)
