"""Reduced-order model of the mean velocity field below a hovering quadrotor.

Far field (past the merge point): classical turbulent round-jet scaling with
a linearly growing half-width, a hyperbolically decaying centerline velocity
and self-similar axial/lateral profiles. Near field: an algebraic stand-in
built from two per-rotor annular jets that cross-fades into the far-field
profile around the merge point.

All evaluations happen in the unit convention declared by the JetScaling
instance (arm lengths / induced velocity by default, SI on request).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ValidityError

# Shape exponent constant of the self-similar axial profile: the profile
# drops to one half of the centerline value exactly at xi = 1.
_PROFILE_ALPHA = math.sqrt(2.0) - 1.0

# Design constants of the near-field closed form. These are not fitted to
# data; they are chosen so the synthetic near field reproduces the known
# qualitative structure (hub dead core, per-rotor annuli, dead zone between
# the jets, merge into a single jet at the configured merge point).
HUB_DEPTH = 0.45          # hub-core depression depth at the rotor plane
HUB_DECAY = 0.6           # z decay length of the hub depression, in arm lengths
SIGMA_GROWTH = 0.03       # per-rotor jet width growth per unit z
LATERAL_FRACTION = 0.05   # |v| / u cap of the near-field lateral component
_NORM_SCAN_POINTS = 2049  # lateral samples used to normalize a near-field row

LENGTH_UNITS = ("meters", "arm_lengths")
VELOCITY_UNITS = ("m_per_s", "induced_velocity")


@dataclass(frozen=True)
class Environment:
    """Fluid constants: density in kg/m^3, kinematic viscosity in m^2/s."""

    air_density: float = 1.225
    kinematic_viscosity: float = 1.5e-5

    def __post_init__(self):
        if self.air_density <= 0:
            raise DomainError("air_density must be positive")
        if self.kinematic_viscosity <= 0:
            raise DomainError("kinematic_viscosity must be positive")


@dataclass(frozen=True)
class VehicleGeometry:
    """Physical constants of the vehicle, in SI units.

    arm_length is the distance from the body center to a motor and is the
    universal length normalization; rotor_radius enters only through the
    actuator-disk area.
    """

    arm_length: float = 0.0325
    rotor_radius: float = 0.0225
    rotor_count: int = 4
    weight: float = 0.265

    def __post_init__(self):
        if self.arm_length <= 0:
            raise DomainError("arm_length must be positive")
        if self.rotor_radius <= 0:
            raise DomainError("rotor_radius must be positive")
        if self.rotor_count < 1:
            raise DomainError("rotor_count must be at least 1")
        if self.weight <= 0:
            raise DomainError("weight must be positive")

    @property
    def disk_area(self):
        """Area swept by one propeller."""
        return math.pi * self.rotor_radius**2


def induced_velocity(geom: VehicleGeometry, env: Environment, thrust: float) -> float:
    """Actuator-disk induced velocity for a given total thrust in newtons.

    sqrt(F / (2 rho A n)): increases with thrust, decreases with disk area,
    rotor count and density.
    """
    if thrust <= 0:
        raise DomainError("thrust must be positive")
    return math.sqrt(thrust / (2.0 * env.air_density * geom.disk_area * geom.rotor_count))


def reynolds(u_c: float, r_half: float, env: Environment) -> float:
    """Jet Reynolds number u_c * r_half / nu."""
    if u_c <= 0 or r_half <= 0:
        raise DomainError("u_c and r_half must be positive")
    return u_c * r_half / env.kinematic_viscosity


def axial_shape(xi):
    """Self-similar axial profile u / u_c as a function of xi = |x| / r_half."""
    xi = np.asarray(xi, dtype=float)
    return 1.0 / (1.0 + _PROFILE_ALPHA * xi**2) ** 2


def lateral_shape(xi):
    """Self-similar lateral profile v / u_c; odd, zero at xi = 0 and |xi| = 1."""
    xi = np.asarray(xi, dtype=float)
    return 0.5 * (xi - xi**3) / (1.0 + xi**2) ** 2


@dataclass(frozen=True)
class JetScaling:
    """Four-parameter far-field scaling of the merged downwash jet.

    spread_rate:    dimensionless half-width growth rate
    decay_product:  product of decay constant and jet exit diameter, in the
                    declared length unit
    virtual_origin: upstream point the far-field jet appears to emanate from
    merge_point:    station where the per-rotor jets have merged; the scaling
                    laws are valid strictly below it
    The unit convention is fixed at construction and applies to every
    evaluation and every stored length/velocity.
    """

    spread_rate: float
    decay_product: float
    virtual_origin: float
    merge_point: float = 6.5
    initial_jet_velocity: float = 1.0
    length_unit: str = "arm_lengths"
    velocity_unit: str = "induced_velocity"

    def __post_init__(self):
        if self.spread_rate <= 0:
            raise DomainError("spread_rate must be positive")
        if self.decay_product <= 0:
            raise DomainError("decay_product must be positive")
        if self.merge_point <= 0:
            raise DomainError("merge_point must be positive")
        if self.virtual_origin >= self.merge_point:
            raise DomainError("virtual_origin must lie above the merge point")
        if self.initial_jet_velocity <= 0:
            raise DomainError("initial_jet_velocity must be positive")
        if self.length_unit not in LENGTH_UNITS:
            raise DomainError(f"length_unit must be one of {LENGTH_UNITS}")
        if self.velocity_unit not in VELOCITY_UNITS:
            raise DomainError(f"velocity_unit must be one of {VELOCITY_UNITS}")

    def half_width(self, z, force=False):
        """Jet half-width S * (z - z0); valid only past the merge point.

        Pass force=True to evaluate the raw linear form below the merge
        point (used by collapse diagnostics).
        """
        z = np.asarray(z, dtype=float)
        if not force and np.any(z <= self.merge_point):
            raise ValidityError(
                "half_width is only valid past the merge point "
                f"(z > {self.merge_point}); pass force=True to override"
            )
        out = self.spread_rate * (z - self.virtual_origin)
        return float(out) if out.ndim == 0 else out

    def centerline_velocity(self, z):
        """Centerline decay u0 * Bd / (z - z0); singular at the virtual origin."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= self.virtual_origin):
            raise DomainError("centerline velocity is singular at and above the virtual origin")
        out = self.initial_jet_velocity * self.decay_product / (z - self.virtual_origin)
        return float(out) if out.ndim == 0 else out

    def axial_profile(self, x, z, force=False):
        """Mean axial velocity at lateral offset x and station z (far field)."""
        r = self.half_width(z, force=force)
        xi = np.abs(np.asarray(x, dtype=float)) / r
        out = self.centerline_velocity(z) * axial_shape(xi)
        return float(out) if np.ndim(out) == 0 else out

    def lateral_profile(self, x, z, force=False):
        """Mean lateral velocity at offset x and station z; odd in x."""
        r = self.half_width(z, force=force)
        xi = np.asarray(x, dtype=float) / r
        out = self.centerline_velocity(z) * lateral_shape(xi)
        return float(out) if np.ndim(out) == 0 else out

    def converted(self, length_unit, velocity_unit, arm_length=None, induced_velocity=None):
        """Return an equivalent scaling expressed in another unit convention.

        Crossing between normalized and SI lengths requires arm_length in
        meters; crossing velocity conventions requires the induced velocity
        in m/s.
        """
        if length_unit not in LENGTH_UNITS:
            raise DomainError(f"length_unit must be one of {LENGTH_UNITS}")
        if velocity_unit not in VELOCITY_UNITS:
            raise DomainError(f"velocity_unit must be one of {VELOCITY_UNITS}")
        lf = 1.0
        if length_unit != self.length_unit:
            if arm_length is None or arm_length <= 0:
                raise DomainError("arm_length (m) required to convert length units")
            lf = arm_length if length_unit == "meters" else 1.0 / arm_length
        vf = 1.0
        if velocity_unit != self.velocity_unit:
            if induced_velocity is None or induced_velocity <= 0:
                raise DomainError("induced_velocity (m/s) required to convert velocity units")
            vf = induced_velocity if velocity_unit == "m_per_s" else 1.0 / induced_velocity
        return replace(
            self,
            spread_rate=self.spread_rate,
            decay_product=self.decay_product * lf,
            virtual_origin=self.virtual_origin * lf,
            merge_point=self.merge_point * lf,
            initial_jet_velocity=self.initial_jet_velocity * vf,
            length_unit=length_unit,
            velocity_unit=velocity_unit,
        )


#: Fitted single-vehicle far-field parameters for the stock 32.5 mm arm
#: quadrotor, in arm-length / induced-velocity units.
DEFAULT_SCALING = JetScaling(
    spread_rate=0.0667,
    decay_product=9.508,
    virtual_origin=-6.0585,
    merge_point=6.5,
)

DEFAULT_GEOMETRY = VehicleGeometry()
DEFAULT_ENVIRONMENT = Environment()


@dataclass(frozen=True)
class NearFieldConfig:
    """Parameters of the algebraic near-field stand-in.

    Lengths and velocities are in the same units as the JetScaling the
    config is used with. blend_window is the z extent of the cross-fade
    into the far-field profile, centered on the merge point.
    """

    rotor_jet_peak: float
    annulus_inner_fraction: float
    jet_width_sigma: float
    inflow_peak_fraction: float = 0.2
    blend_window: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.inflow_peak_fraction < 1.0:
            raise DomainError("inflow_peak_fraction must be in (0, 1)")
        if self.blend_window <= 0:
            raise DomainError("blend_window must be positive")
        if not 0.0 <= self.annulus_inner_fraction < 1.0:
            raise DomainError("annulus_inner_fraction must be in [0, 1)")
        if self.rotor_jet_peak <= 0:
            raise DomainError("rotor_jet_peak must be positive")
        if self.jet_width_sigma <= 0:
            raise DomainError("jet_width_sigma must be positive")

    @classmethod
    def defaults(cls, geom: VehicleGeometry, scaling: JetScaling, induced_velocity=None):
        """Default configuration derived from the vehicle geometry.

        For an SI velocity convention the induced velocity in m/s must be
        given (it sets the rotor jet peak).
        """
        lf = 1.0 if scaling.length_unit == "meters" else 1.0 / geom.arm_length
        if scaling.velocity_unit == "induced_velocity":
            peak = 1.0
        else:
            if induced_velocity is None or induced_velocity <= 0:
                raise DomainError("induced_velocity (m/s) required for SI velocity units")
            peak = induced_velocity
        return cls(
            rotor_jet_peak=peak,
            annulus_inner_fraction=0.30,
            jet_width_sigma=0.55 * geom.rotor_radius * lf,
            inflow_peak_fraction=0.20,
            blend_window=1.0 * geom.arm_length * lf,
        )


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _length_scales(geom: VehicleGeometry, scaling: JetScaling):
    """(arm length, rotor radius) expressed in the scaling's length unit."""
    if scaling.length_unit == "meters":
        return geom.arm_length, geom.rotor_radius
    return 1.0, geom.rotor_radius / geom.arm_length


def _near_raw_profile(x, z, arm, rotor, cfg: NearFieldConfig):
    """Unnormalized two-jet lateral profile at station z > 0."""
    sigma = cfg.jet_width_sigma + SIGMA_GROWTH * z
    sigma_in = max(cfg.annulus_inner_fraction * rotor, 1e-9 * arm)
    depth = HUB_DEPTH * math.exp(-((z / (HUB_DECAY * arm)) ** 2))
    out = np.zeros_like(np.asarray(x, dtype=float))
    for center in (arm, -arm):
        s2 = (x - center) ** 2
        out = out + np.exp(-s2 / (2.0 * sigma**2))
        out = out - depth * np.exp(-s2 / (2.0 * sigma_in**2))
    return out


def _near_axial_row(x, z, arm, rotor, cfg, amp_end, merge_point):
    """Normalized near-field axial velocity along one z row."""
    span = arm + 6.0 * (cfg.jet_width_sigma + SIGMA_GROWTH * max(z, 0.0))
    scan = np.linspace(-span, span, _NORM_SCAN_POINTS)
    norm = _near_raw_profile(scan, z, arm, rotor, cfg).max()
    amp = cfg.rotor_jet_peak + (amp_end - cfg.rotor_jet_peak) * (z / merge_point) ** 2
    return amp * _near_raw_profile(x, z, arm, rotor, cfg) / norm


def _inflow_row(x, z, arm, cfg, rotor):
    """Suction field above the rotor plane (z < 0); u stays positive (downward)."""
    sigma = cfg.jet_width_sigma
    bumps = np.exp(-((x - arm) ** 2) / (2 * sigma**2)) + np.exp(-((x + arm) ** 2) / (2 * sigma**2))
    return cfg.inflow_peak_fraction * cfg.rotor_jet_peak * bumps * math.exp(-((z / rotor) ** 2))


def near_field_velocity(geom: VehicleGeometry, scaling: JetScaling, cfg: NearFieldConfig, x, z):
    """Mean (u, v) in the near-field region at station z.

    Two per-rotor annular jets centered at the rotor axes, with a depressed
    hub core that fades downstream; cross-fades into the far-field profiles
    across blend_window centered at the merge point. Above the rotor plane
    (z < 0) an inflow field with peak inflow_peak_fraction of the rotor jet
    peak. x may be an array; z is a single station.
    """
    z = float(z)
    arm, rotor = _length_scales(geom, scaling)
    blend_end = scaling.merge_point + 0.5 * cfg.blend_window
    if z > blend_end:
        raise ValidityError(
            f"near-field model ends at z = {blend_end:g}; use the far-field profiles"
        )
    x = np.asarray(x, dtype=float)
    if z < 0:
        u_near = _inflow_row(x, z, arm, cfg, rotor)
        w = 0.0
    else:
        amp_end = scaling.centerline_velocity(scaling.merge_point)
        u_near = _near_axial_row(x, z, arm, rotor, cfg, amp_end, scaling.merge_point)
        w = float(_smoothstep(
            (z - (scaling.merge_point - 0.5 * cfg.blend_window)) / cfg.blend_window))
    # Near-field lateral flow converges toward the vehicle axis; capped at
    # a small fraction of the axial speed and odd in x by construction.
    v_near = -LATERAL_FRACTION * u_near * np.tanh(x / arm)
    if w > 0.0:
        u = (1.0 - w) * u_near + w * scaling.axial_profile(x, z, force=True)
        v = (1.0 - w) * v_near + w * scaling.lateral_profile(x, z, force=True)
    else:
        u, v = u_near, v_near
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def _axis(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == 1:
        arr = arr[0]
    return arr


def grid_axis(spec):
    """Build a grid axis from an explicit array or a (start, stop, count) tuple."""
    if isinstance(spec, tuple) and len(spec) == 3:
        start, stop, count = spec
        count = int(count)
        if count < 1:
            raise DomainError("grid axis needs at least one node")
        if count == 1:
            return np.asarray([float(start)])
        return np.linspace(float(start), float(stop), count)
    arr = _axis(spec)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("grid axis must be a non-empty 1-D array")
    return arr


def evaluate_field(geom: VehicleGeometry, scaling: JetScaling, cfg: NearFieldConfig,
                   x_axis, z_axis, frame_count=1):
    """Sample the composite near/far model on a rectangular grid.

    Rows strictly past the blend window are produced by the far-field
    profile functions directly, so they match axial_profile and
    lateral_profile pointwise.
    """
    from .fields import VelocityField

    x = grid_axis(x_axis)
    z = grid_axis(z_axis)
    for name, axis in (("x", x), ("z", z)):
        if axis.size > 1 and not np.all(np.diff(axis) > 0):
            raise DomainError(f"{name} axis must be strictly increasing")
    blend_end = scaling.merge_point + 0.5 * cfg.blend_window
    u = np.empty((z.size, x.size))
    v = np.empty_like(u)
    for i, zi in enumerate(z):
        if zi > blend_end:
            u[i] = scaling.axial_profile(x, zi)
            v[i] = scaling.lateral_profile(x, zi)
        else:
            u[i], v[i] = near_field_velocity(geom, scaling, cfg, x, zi)
    return VelocityField(
        x_axis=x, z_axis=z, u=u, v=v, frame_count=frame_count,
        length_unit=scaling.length_unit, velocity_unit=scaling.velocity_unit,
    )
