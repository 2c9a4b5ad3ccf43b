"""Synthetic interaction-load surfaces calibrated to the published anchor
observations, for use when the measured dataset is not on disk.

The lower-vehicle thrust deficit is an anisotropic Gaussian solved to pass
through three anchors: a 35 % deficit at stacked separation dz/l = 4 and
recovery to within 2 % at lateral extent 3 and axial extent 19 arm lengths.
Level sets of that form are exact axially-aligned ellipses, which matches
the observed influence-region geometry.
"""

from __future__ import annotations

import math

import numpy as np

from .loads import LoadGrid, VehicleLoads

# Anchor observations the surfaces are solved against.
CLOSE_DEFICIT = 0.35        # lower thrust drops to 65 % at (dx, dz) = (0, 4)
CLOSE_STATION = 4.0
RECOVERY_LEVEL = 0.02       # "unaltered" means deficit below 2 %
LATERAL_EXTENT = 3.0        # recovery crossing along dx at the 0.98 level
AXIAL_EXTENT = 19.0         # recovery crossing along dz at the 0.98 level
UPPER_CLOSE_DEFICIT = 0.10  # upper vehicle keeps 90 % at (0, 4)

STD_PEAK = 0.08             # peak thrust unsteadiness (fraction of weight)
STD_THRESHOLD = 0.005       # level at which unsteadiness is negligible
STD_LATERAL_EXTENT = 4.5
STD_AXIAL_EXTENT = 17.0
UPPER_STD_RATIO = 0.01      # upper fluctuations two orders below lower

PITCH_PEAK_OFFSET = 2.0     # moment peaks at dx/l = 2
PITCH_PEAK = 0.40
PITCH_AXIAL_SCALE = 14.0
UPPER_PITCH_RATIO = 1.0 / 3.0
PITCH_STD_PEAK = 0.05
PITCH_STD_AXIAL_SCALE = 9.66


def _deficit_scales():
    """Solve the Gaussian deficit amplitude and axes from the anchors."""
    frac = CLOSE_STATION**2 / AXIAL_EXTENT**2
    ln_a = (math.log(CLOSE_DEFICIT) - frac * math.log(RECOVERY_LEVEL)) / (1.0 - frac)
    amp = math.exp(ln_a)
    reach = math.sqrt(ln_a - math.log(RECOVERY_LEVEL))
    return amp, LATERAL_EXTENT / reach, AXIAL_EXTENT / reach


def _pitch_shape(dx):
    """Unit-peak lateral shape with its maximum exactly at the peak offset."""
    s = dx / PITCH_PEAK_OFFSET
    return s * np.exp(0.5 * (1.0 - s * s))


def synthetic_load_grid(dx_max=8.0, dx_step=0.5, dz_min=3.0, dz_max=34.0, dz_step=1.0):
    """Build a LoadGrid reproducing every quoted anchor of the measured maps.

    The default axes cover the static test matrix; pass a smaller dz_min to
    cover close-range dynamic trajectories.
    """
    dx = np.arange(0.0, dx_max + 0.5 * dx_step, dx_step)
    dz = np.arange(dz_min, dz_max + 0.5 * dz_step, dz_step)
    gx, gz = np.meshgrid(dx, dz)

    amp, sx, sz = _deficit_scales()
    deficit = amp * np.exp(-((gx / sx) ** 2) - (gz / sz) ** 2)

    reach_std = math.sqrt(math.log(STD_PEAK / STD_THRESHOLD))
    t_std = STD_PEAK * np.exp(
        -((gx / (STD_LATERAL_EXTENT / reach_std)) ** 2)
        - (gz / (STD_AXIAL_EXTENT / reach_std)) ** 2
    )

    pitch = PITCH_PEAK * _pitch_shape(gx) * np.exp(-((gz / PITCH_AXIAL_SCALE) ** 2))
    p_std = PITCH_STD_PEAK * _pitch_shape(gx) * np.exp(-((gz / PITCH_STD_AXIAL_SCALE) ** 2))

    lower = VehicleLoads(
        mean_thrust=1.0 - deficit,
        thrust_std=t_std,
        mean_pitch=pitch,
        pitch_std=p_std,
    )
    upper = VehicleLoads(
        mean_thrust=1.0 - (UPPER_CLOSE_DEFICIT / CLOSE_DEFICIT) * deficit,
        thrust_std=UPPER_STD_RATIO * t_std,
        mean_pitch=UPPER_PITCH_RATIO * pitch,
        pitch_std=UPPER_STD_RATIO * p_std,
    )
    return LoadGrid(dx_axis=dx, dz_axis=dz, upper=upper, lower=lower)
